#include <gtest/gtest.h>

#include <random>

#include "ragalign/errors.hpp"
#include "ragalign/harness.hpp"
#include "support.hpp"

using namespace ragalign;
using testing_support::fast_retry;
using testing_support::scripted;
using testing_support::spec;
using testing_support::TempDir;

namespace {

ParsedCompletion with_sentences(std::vector<std::string> s) {
    ParsedCompletion p;
    p.sentences = std::move(s);
    p.answer = "a";
    p.compliant = true;
    return p;
}

const std::vector<std::pair<std::string, std::string>> kChunks{
    {"rel", "The mill was built by Ada Lovell. It burned in 1901."},
    {"n1", "Rivers flood in spring. Bread is baked daily."},
};

}  // namespace

TEST(ExtractionPrf, HandCases) {
    auto both = extraction_prf(with_sentences({"The mill was built by Ada Lovell.", "it burned in 1901"}), {"rel"}, kChunks);
    EXPECT_DOUBLE_EQ(both.precision, 1.0);
    EXPECT_DOUBLE_EQ(both.recall, 1.0);
    EXPECT_DOUBLE_EQ(both.f1, 1.0);

    auto mixed = extraction_prf(with_sentences({"The mill was built by Ada Lovell.", "Rivers flood in spring."}), {"rel"}, kChunks);
    EXPECT_DOUBLE_EQ(mixed.precision, 0.5);
    EXPECT_DOUBLE_EQ(mixed.recall, 1.0);
    EXPECT_DOUBLE_EQ(mixed.f1, 2.0 / 3.0);

    auto none = extraction_prf(with_sentences({}), {"rel"}, kChunks);
    EXPECT_EQ(none.precision, 0.0);
    EXPECT_EQ(none.recall, 0.0);
    EXPECT_EQ(none.f1, 0.0);
}

TEST(ExtractionPrf, UnattributedSentencesCounted) {
    auto s = extraction_prf(with_sentences({"Something paraphrased entirely."}), {"rel"}, kChunks);
    EXPECT_EQ(s.unattributed, 1u);
    EXPECT_EQ(s.f1, 0.0);
}

TEST(ExtractionPrf, BoundsOnRandomCases) {
    std::mt19937_64 rng(5);
    const std::vector<std::string> words{"red", "blue", "fox", "den", "hill", "sun"};
    std::uniform_int_distribution<std::size_t> w(0, words.size() - 1), len(1, 4), count(0, 5), nchunks(1, 5);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<std::pair<std::string, std::string>> chunks;
        const auto n = nchunks(rng);
        for (std::size_t c = 0; c < n; ++c) {
            std::string text;
            for (std::size_t i = 0; i < 12; ++i) text += words[w(rng)] + " ";
            chunks.emplace_back("c" + std::to_string(c), text);
        }
        std::vector<std::string> sentences(count(rng));
        for (auto& s : sentences) {
            const auto l = len(rng);
            for (std::size_t i = 0; i < l; ++i) s += (i ? " " : "") + words[w(rng)];
        }
        std::vector<std::string> relevant{"c0"};
        if (n > 1 && trial % 2) relevant.push_back("c1");
        auto r = extraction_prf(with_sentences(sentences), relevant, chunks);
        for (double v : {r.precision, r.recall, r.f1}) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
        EXPECT_EQ(r.f1 == 0.0, r.precision == 0.0 || r.recall == 0.0);
        EXPECT_LE(r.f1, std::min(2 * r.precision, 2 * r.recall) + 1e-12);
    }
}

namespace {

struct HarnessEnv {
    TempDir dir;
    Gateway gw{dir.path(), fast_retry()};
    ProviderSpec writer = spec("writer", ProviderRole::qa_writer);
    ProviderSpec judge = spec("judge", ProviderRole::judge);
    std::vector<Chunk> chunks = testing_support::fixture_chunks();
    OneHotTokenEmbedder embedder;

    HarnessEnv() {
        gw.register_provider(writer, scripted({{"behavior", "qa_writer"}}));
        gw.register_provider(judge, scripted({{"behavior", "judge"}}));
    }

    TestSet test_set(std::size_t per_source) {
        TestSetConfig cfg;
        cfg.per_source_count = per_source;
        cfg.seed = 3;
        cfg.workers = 2;
        return build_test_set(chunks, gw, writer, judge, cfg);
    }

    ProviderSpec endpoint(const std::string& id, const json& script) {
        auto s = spec(id);
        gw.register_provider(s, scripted(script));
        return s;
    }
};

}  // namespace

TEST(TestSet, OnePerSource) {
    HarnessEnv env;
    auto set = env.test_set(1);
    EXPECT_EQ(set.instances.size(), 5u);
    EXPECT_EQ(set.inputs.size(), 5u);
    for (std::size_t i = 0; i < set.instances.size(); ++i) {
        EXPECT_EQ(set.instances[i].status, QAStatus::filtered_ok);
        EXPECT_EQ(set.inputs[i].qa_id, set.instances[i].qa_id);
        const ChunkStore store(env.chunks);
        EXPECT_EQ(store.at(set.instances[i].relevant_chunk_id).split, Split::test);
    }
}

TEST(TestSet, SourceWithoutTestChunksRaises) {
    HarnessEnv env;
    env.chunks.push_back(Chunk{"extra#0", "extra", "Lonely text lives here.", 4, "orphan", Split::train});
    EXPECT_THROW(env.test_set(1), BuildError);
}

TEST(TestSet, TooFewTestChunksRaises) {
    HarnessEnv env;
    EXPECT_THROW(env.test_set(1000), BuildError);
}

TEST(SweepSpec, Validation) {
    SweepSpec s;
    s.axis = SweepAxis::position;
    s.values = {0, 26};
    EXPECT_THROW(s.validate(), ArgumentError);
    s.axis = SweepAxis::noise;
    s.values = {0, 30};
    EXPECT_THROW(s.validate(), ArgumentError);
    s.values = {};
    EXPECT_THROW(s.validate(), ArgumentError);
    s.values = {5};
    s.repetitions = 0;
    EXPECT_THROW(s.validate(), ArgumentError);
}

TEST(Sweep, PerfectEndpointIsFlat) {
    HarnessEnv env;
    auto set = env.test_set(1);
    auto perfect = env.endpoint("perfect", {{"behavior", "echo_answer"}});
    const ChunkStore store(env.chunks);
    SweepSpec spec;
    spec.axis = SweepAxis::position;
    spec.values = {0, 7, 25};
    auto report = run_sweep(perfect, set.instances, spec, SweepContext{env.gw, env.judge, env.embedder, store, 2});
    EXPECT_TRUE(report.full_coverage());
    for (const auto& p : report.points()) {
        EXPECT_EQ(p.acc, 1.0);
        EXPECT_EQ(p.llm_eval, 1.0);
        EXPECT_EQ(p.rouge_l, 1.0);
        EXPECT_EQ(p.bert, 1.0);
        EXPECT_EQ(p.avg, 1.0);
        EXPECT_EQ(p.precision, 1.0);
        EXPECT_EQ(p.recall, 1.0);
        EXPECT_EQ(p.attempted, 5u);
    }
}

TEST(Sweep, PositionZeroOnlyEndpoint) {
    HarnessEnv env;
    auto set = env.test_set(1);
    auto first_only = env.endpoint("first", {{"behavior", "position_zero_only"}});
    const ChunkStore store(env.chunks);
    SweepSpec spec;
    spec.axis = SweepAxis::position;
    spec.values = {0, 1, 13, 25};
    auto report = run_sweep(first_only, set.instances, spec, SweepContext{env.gw, env.judge, env.embedder, store, 2});
    for (const auto& p : report.points()) EXPECT_EQ(p.acc, p.value == 0 ? 1.0 : 0.0) << p.value;
}

TEST(Sweep, IdealBaselineIsConstant) {
    HarnessEnv env;
    auto set = env.test_set(1);
    auto mid = env.endpoint("mid", {{"behavior", "quality_tier"}, {"tier", 0.5}});
    const ChunkStore store(env.chunks);
    SweepSpec spec;
    spec.axis = SweepAxis::noise;
    spec.values = {0};
    spec.repetitions = 3;
    auto report = run_sweep(mid, set.instances, spec, SweepContext{env.gw, env.judge, env.embedder, store, 1});
    ASSERT_EQ(report.results.size(), 15u);
    std::map<std::string, MetricVector> by_qa;
    for (const auto& r : report.results) {
        const auto qa = r.input_id.substr(0, r.input_id.find('@'));
        auto [it, fresh] = by_qa.try_emplace(qa, r.metrics);
        if (!fresh) EXPECT_EQ(it->second, r.metrics);
    }
}

TEST(Sweep, InsufficientNoiseBecomesErrorSlot) {
    HarnessEnv env;
    auto set = env.test_set(1);
    set.instances[0].noisy_chunk_ids.resize(2);
    auto perfect = env.endpoint("perfect", {{"behavior", "echo_answer"}});
    const ChunkStore store(env.chunks);
    SweepSpec spec;
    spec.axis = SweepAxis::noise;
    spec.values = {1, 5};
    auto report = run_sweep(perfect, set.instances, spec, SweepContext{env.gw, env.judge, env.embedder, store, 1});
    EXPECT_FALSE(report.full_coverage());
    auto points = report.points();
    EXPECT_EQ(points[0].errors, 0u);
    EXPECT_EQ(points[1].errors, 1u);
}

TEST(Sweep, NoncompliantScoresZero) {
    HarnessEnv env;
    auto set = env.test_set(1);
    auto terse = env.endpoint("terse", {{"behavior", "fixed_text"}, {"text", "just an answer"}});
    const ChunkStore store(env.chunks);
    SweepSpec spec;
    spec.axis = SweepAxis::noise;
    spec.values = {3};
    auto report = run_sweep(terse, set.instances, spec, SweepContext{env.gw, env.judge, env.embedder, store, 1});
    auto p = report.points().at(0);
    EXPECT_EQ(p.noncompliant, 5u);
    EXPECT_EQ(p.compliant_rate, 0.0);
    EXPECT_EQ(p.avg, 0.0);
    EXPECT_TRUE(report.full_coverage());
}

TEST(Sweep, ReportJsonRoundTrip) {
    HarnessEnv env;
    auto set = env.test_set(1);
    auto perfect = env.endpoint("perfect", {{"behavior", "echo_answer"}});
    const ChunkStore store(env.chunks);
    SweepSpec spec;
    spec.axis = SweepAxis::noise;
    spec.values = {0, 4};
    auto report = run_sweep(perfect, set.instances, spec, SweepContext{env.gw, env.judge, env.embedder, store, 1});
    auto back = sweep_report_from_json(to_json(report));
    EXPECT_EQ(to_json(back), to_json(report));
}

TEST(Report, CsvRowsMergeAndDeterminism) {
    HarnessEnv env;
    auto set = env.test_set(1);
    auto mid = env.endpoint("mid", {{"behavior", "quality_tier"}, {"tier", 0.6}});
    const ChunkStore store(env.chunks);
    SweepSpec spec;
    spec.axis = SweepAxis::position;
    spec.values = {0, 10, 20};
    spec.seed = 4;
    SweepContext ctx{env.gw, env.judge, env.embedder, store, 2};
    auto a = run_sweep(mid, set.instances, spec, ctx);
    auto b = run_sweep(mid, set.instances, spec, ctx);

    TempDir out;
    auto files = aggregate_report({a}, out / "one");
    ASSERT_EQ(files.csv.size(), 1u);
    const auto csv = read_text(files.csv[0]);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "value,acc,llm_eval,rouge_l,bert,avg,precision,recall,f1,compliant_rate");
    aggregate_report({b}, out / "two");
    EXPECT_EQ(read_text(out / "two" / "sweep_position.csv"), csv);

    aggregate_report({a, b}, out / "merged");
    const auto summary = read_json(out / "merged" / "summary.json");
    EXPECT_EQ(summary["sweeps"][0]["repetitions"], 2);
    EXPECT_EQ(summary["sweeps"][0]["points"][0]["attempted"], 10);
    EXPECT_EQ(read_text(out / "merged" / "sweep_position.csv"), csv);

    EXPECT_THROW(aggregate_report({}, out / "none"), ArgumentError);
}
