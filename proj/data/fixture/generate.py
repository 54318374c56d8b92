"""Regenerates the synthetic 50-document fixture corpus.

Sentences are built from invented names and each ends in two of them, so the
last three words of one sentence share at most one word with another's.
"""
import json
import random
from pathlib import Path

SOURCES = ["almanac", "chronicle", "handbook", "gazette", "registry"]
TRAIN_DOCS, TEST_DOCS, SENTENCES_PER_DOC = 8, 2, 16

ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "th", "qu", "br", "tr"]
VOWELS = ["a", "e", "i", "o", "u", "ae", "io"]
CODAS = ["", "n", "r", "s", "th", "l", "m", "x"]

TEMPLATES = [
    "{a} founded the {b} workshop in {c} during {y}.",
    "The river {a} flows past the quarry at {c} near {b}.",
    "{a} traded copper lanterns with merchants from {b} each {y}.",
    "A bridge named {a} connects the harbor of {b} with {c}.",
    "Scholars at {a} catalogued every map of {b} before {y}.",
    "The festival of {a} honours the weavers of {b} in {c}.",
    "{a} measured the tides along {b} for {c} in {y}.",
    "Farmers in {a} grow violet barley between {b} and {c}.",
    "The council of {a} appointed the keeper {b} from {c}.",
    "Sailors from {a} charted the reef called {b} in {y}.",
]


def word(rng, used):
    while True:
        w = "".join(rng.choice(ONSETS) + rng.choice(VOWELS) for _ in range(rng.randint(2, 3))) + rng.choice(CODAS)
        w = w.capitalize()
        if w not in used:
            used.add(w)
            return w


def main():
    rng = random.Random(20240611)
    used = set()
    out = Path(__file__).resolve().parent
    for source in SOURCES:
        for split, count in (("train", TRAIN_DOCS), ("test", TEST_DOCS)):
            lines = []
            for n in range(count):
                sentences = []
                for _ in range(SENTENCES_PER_DOC):
                    t = rng.choice(TEMPLATES)
                    sentences.append(t.format(a=word(rng, used), b=word(rng, used), c=word(rng, used),
                                              y=str(rng.randint(1100, 1990))))
                doc = {"id": f"{source}-{split}-{n:02d}", "title": f"{source.capitalize()} record {n}",
                       "text": " ".join(sentences)}
                lines.append(json.dumps(doc))
            (out / f"{source}_{split}.jsonl").write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
