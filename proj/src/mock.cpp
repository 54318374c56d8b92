#include "ragalign/mock.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <thread>

#include "ragalign/errors.hpp"
#include "ragalign/parser.hpp"

namespace ragalign::mock {

namespace {

std::string strip_trailing_punct(std::string word) {
    while (!word.empty() && std::ispunct(static_cast<unsigned char>(word.back()))) word.pop_back();
    return word;
}

BackendReply ok_reply(std::string text) {
    BackendReply r;
    r.text = std::move(text);
    return r;
}

std::string no_answer() { return "Extracted Sentences:\n\nAnswer: " + std::string(kNoAnswer); }

std::string ext2gen_text(const std::string& sentence, const std::string& answer) {
    ParsedCompletion p;
    p.sentences = {sentence};
    p.answer = answer;
    p.compliant = true;
    return render_completion(p);
}

// A sentence from some chunk other than `avoid`, chosen by key; nullopt if none.
std::optional<std::string> distractor_sentence(const Ext2GenPromptView& view, std::optional<std::size_t> avoid,
                                               std::uint64_t seed, std::string_view key) {
    std::vector<std::string> pool;
    for (std::size_t c = 0; c < view.chunks.size(); ++c) {
        if (avoid && c == *avoid) continue;
        for (auto& s : split_sentences(view.chunks[c])) {
            if (split_whitespace(s).size() >= 4) pool.push_back(std::move(s));
        }
    }
    if (pool.empty()) return std::nullopt;
    return pool[derive_seed(seed, key) % pool.size()];
}

std::string wrong_answer_from(const std::string& sentence) {
    auto words = split_whitespace(sentence);
    const std::size_t take = std::min<std::size_t>(3, words.size());
    std::vector<std::string> tail(words.end() - static_cast<std::ptrdiff_t>(take), words.end());
    tail.back() = strip_trailing_punct(tail.back());
    return join(tail);
}

std::string verdict_json(std::string_view key, std::string_view value) {
    return json{{std::string(key), std::string(value)}}.dump();
}

}  // namespace

std::string_view to_string(Behavior b) {
    switch (b) {
        case Behavior::echo_answer: return "echo_answer";
        case Behavior::quality_tier: return "quality_tier";
        case Behavior::position_zero_only: return "position_zero_only";
        case Behavior::fixed_json: return "fixed_json";
        case Behavior::fixed_text: return "fixed_text";
        case Behavior::fail: return "fail";
        case Behavior::replay: return "replay";
        case Behavior::qa_writer: return "qa_writer";
        case Behavior::support_judge: return "support_judge";
        case Behavior::inclusion_judge: return "inclusion_judge";
        case Behavior::judge: return "judge";
    }
    return "echo_answer";
}

Behavior parse_behavior(std::string_view text) {
    for (auto b : {Behavior::echo_answer, Behavior::quality_tier, Behavior::position_zero_only, Behavior::fixed_json,
                   Behavior::fixed_text, Behavior::fail, Behavior::replay, Behavior::qa_writer,
                   Behavior::support_judge, Behavior::inclusion_judge, Behavior::judge}) {
        if (to_string(b) == text) return b;
    }
    throw ConfigError("unknown mock behavior: " + std::string(text));
}

Script Script::from_json(const json& j) {
    Script s;
    try {
        s.behavior = parse_behavior(j.value("behavior", std::string{"echo_answer"}));
        s.tier = j.value("tier", 1.0);
        s.payload = j.value("payload", json::object());
        s.text = j.value("text", std::string{});
        s.fail_times = j.value("fail_times", std::size_t{0});
        s.fail_status = j.value("fail_status", 500);
        if (j.contains("then")) s.then = std::make_shared<Script>(from_json(j["then"]));
        s.recording = j.value("recording", std::string{});
        s.hallucination_rate = j.value("hallucination_rate", 0.0);
        s.inclusion_threshold = j.value("inclusion_threshold", 0.6);
        s.min_delay_ms = j.value("min_delay_ms", 0u);
        s.max_delay_ms = j.value("max_delay_ms", s.min_delay_ms);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad mock script: ") + e.what());
    }
    if (s.tier < 0.0 || s.tier > 1.0) throw ConfigError("mock tier must lie in [0,1]");
    return s;
}

ScriptedBackend::ScriptedBackend(Script script, std::uint64_t run_seed)
    : script_(std::move(script)), run_seed_(run_seed), failures_left_(script_.fail_times) {}

BackendReply ScriptedBackend::send(const ChatRequest& request) {
    ++calls_;
    const auto now = ++in_flight_;
    auto seen = max_concurrency_.load();
    while (now > seen && !max_concurrency_.compare_exchange_weak(seen, now)) {
    }
    struct Leave {
        std::atomic<std::size_t>& counter;
        ~Leave() { --counter; }
    } leave{in_flight_};

    if (script_.max_delay_ms > 0) {
        const auto span = script_.max_delay_ms - std::min(script_.min_delay_ms, script_.max_delay_ms) + 1;
        const auto delay = script_.min_delay_ms + derive_seed(run_seed_, request.prompt) % span;
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    }
    return respond(script_, request);
}

BackendReply ScriptedBackend::respond(const Script& script, const ChatRequest& request) {
    const auto& prompt = request.prompt;
    switch (script.behavior) {
        case Behavior::fixed_text: return ok_reply(script.text);
        case Behavior::fixed_json: return ok_reply(script.payload.dump());
        case Behavior::fail: {
            auto left = failures_left_.load();
            while (left > 0 && !failures_left_.compare_exchange_weak(left, left - 1)) {
            }
            if (left > 0) return BackendReply{script.fail_status, {}, FinishReason::other, "scripted failure"};
            if (script.then) return respond(*script.then, request);
            return ok_reply("OK");
        }
        case Behavior::replay: {
            std::lock_guard lock(replay_mutex_);
            if (!replay_by_hash_) {
                replay_by_hash_.emplace();
                for (const auto& r : read_jsonl(script.recording)) {
                    (*replay_by_hash_)[r.at("request_hash").get<std::string>()] = r.at("response_text").get<std::string>();
                    replay_by_prompt_[r.at("prompt").get<std::string>()] = r.at("response_text").get<std::string>();
                }
            }
            if (auto it = replay_by_hash_->find(request.request_hash); it != replay_by_hash_->end())
                return ok_reply(it->second);
            if (auto it = replay_by_prompt_.find(prompt); it != replay_by_prompt_.end())
                return ok_reply(it->second);
            return BackendReply{404, {}, FinishReason::other, "request not in recording"};
        }
        case Behavior::echo_answer:
            return ok_reply(quality_tier_generate(prompt, 1.0, request.provider_id, run_seed_));
        case Behavior::quality_tier:
            return ok_reply(quality_tier_generate(prompt, script.tier, request.provider_id, run_seed_));
        case Behavior::position_zero_only: {
            Ext2GenPromptView view;
            if (!parse_ext2gen_prompt(prompt, view)) throw MockError("not an ext2gen prompt");
            const auto loc = locate_answer(view);
            if (!loc || loc->chunk_index != 0) return ok_reply(no_answer());
            return ok_reply(ext2gen_text(loc->sentence, loc->answer));
        }
        case Behavior::qa_writer:
            return ok_reply(write_qa(prompt, script.hallucination_rate, run_seed_));
        case Behavior::judge: {
            Script routed = script;
            routed.behavior = prompt.find("### TRUE ANSWER:") != std::string::npos ? Behavior::inclusion_judge
                                                                                    : Behavior::support_judge;
            return respond(routed, request);
        }
        case Behavior::support_judge: {
            std::string answer, chunk;
            if (!extract_section(prompt, "Answer", answer) || !extract_section(prompt, "Chunk", chunk))
                throw MockError("not a validity-check prompt");
            const auto a = normalize_answer(answer);
            const bool supported = !a.empty() && normalize_answer(chunk).find(a) != std::string::npos;
            return ok_reply(verdict_json("response", supported ? "Supported" : "Not Supported"));
        }
        case Behavior::inclusion_judge: {
            std::string truth, predicted;
            if (!extract_section(prompt, "TRUE ANSWER", truth) || !extract_section(prompt, "Predicted ANSWER", predicted))
                throw MockError("not an LLMEval prompt");
            const auto truth_tokens = normalized_tokens(truth);
            const auto pred_tokens = normalized_tokens(predicted);
            const std::set<std::string> pred_set(pred_tokens.begin(), pred_tokens.end());
            std::size_t hit = 0;
            for (const auto& t : truth_tokens) hit += pred_set.count(t);
            const bool correct = !truth_tokens.empty() &&
                                 static_cast<double>(hit) >= script.inclusion_threshold * static_cast<double>(truth_tokens.size());
            return ok_reply(verdict_json("Correctness", correct ? "True" : "False"));
        }
    }
    throw MockError("unhandled mock behavior");
}

RecordingBackend::RecordingBackend(std::shared_ptr<ChatBackend> inner, std::filesystem::path recording)
    : inner_(std::move(inner)), path_(std::move(recording)) {}

BackendReply RecordingBackend::send(const ChatRequest& request) {
    auto reply = inner_->send(request);
    if (reply.status >= 200 && reply.status < 300) {
        const json record{{"request_hash", request.request_hash}, {"prompt", request.prompt}, {"response_text", reply.text}};
        std::lock_guard lock(mutex_);
        if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
        std::ofstream out(path_, std::ios::app | std::ios::binary);
        if (!out) throw IoError("cannot append to recording " + path_.string());
        out << record.dump() << '\n';
    }
    return reply;
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if ((c == '.' || c == '!' || c == '?') && (i + 1 == text.size() || std::isspace(static_cast<unsigned char>(text[i + 1])))) {
            auto s = trim(text.substr(start, i + 1 - start));
            if (!s.empty()) out.push_back(std::move(s));
            start = i + 1;
        }
    }
    auto tail = trim(text.substr(std::min(start, text.size())));
    if (!tail.empty()) out.push_back(std::move(tail));
    return out;
}

std::optional<AnswerLocation> locate_answer(const Ext2GenPromptView& view) {
    std::string query = view.query;
    if (query.substr(0, kQueryLeadIn.size()) == kQueryLeadIn) {
        const auto prefix = normalized_tokens(query.substr(kQueryLeadIn.size()));
        if (!prefix.empty()) {
            for (std::size_t c = 0; c < view.chunks.size(); ++c) {
                for (const auto& sentence : split_sentences(view.chunks[c])) {
                    const auto words = split_whitespace(sentence);
                    if (words.size() <= prefix.size()) continue;
                    bool match = true;
                    for (std::size_t w = 0; w < prefix.size() && match; ++w)
                        match = normalize_answer(words[w]) == prefix[w];
                    if (!match) continue;
                    std::vector<std::string> rest(words.begin() + static_cast<std::ptrdiff_t>(prefix.size()), words.end());
                    rest.back() = strip_trailing_punct(rest.back());
                    return AnswerLocation{c, sentence, join(rest)};
                }
            }
            return std::nullopt;
        }
    }
    // Free-form query: the sentence sharing the most terms with it.
    const auto q = normalized_tokens(query);
    const std::set<std::string> qset(q.begin(), q.end());
    std::optional<AnswerLocation> best;
    std::size_t best_overlap = 0;
    for (std::size_t c = 0; c < view.chunks.size(); ++c) {
        for (const auto& sentence : split_sentences(view.chunks[c])) {
            std::size_t overlap = 0;
            for (const auto& t : normalized_tokens(sentence)) overlap += qset.count(t);
            if (overlap > best_overlap) {
                best_overlap = overlap;
                best = AnswerLocation{c, sentence, sentence};
            }
        }
    }
    return best;
}

std::string quality_tier_generate(std::string_view prompt, double tier, std::string_view provider_id,
                                  std::uint64_t run_seed) {
    Ext2GenPromptView view;
    if (!parse_ext2gen_prompt(prompt, view)) throw MockError("quality_tier needs an ext2gen prompt");
    const auto loc = locate_answer(view);
    if (!loc) return no_answer();

    // The correctness and concision draws depend on the prompt only, so a
    // higher tier is correct whenever a lower tier is on the same input.
    const double u = unit_hash(run_seed, "correct|" + std::string(prompt));
    const double v = unit_hash(run_seed, "concise|" + std::string(prompt));
    if (u < tier) return ext2gen_text(loc->sentence, v < tier ? loc->answer : loc->sentence);

    const auto other = distractor_sentence(view, loc->chunk_index, run_seed,
                                           "distract|" + std::string(provider_id) + "|" + std::string(prompt));
    if (!other) return no_answer();
    return ext2gen_text(*other, wrong_answer_from(*other));
}

std::string write_qa(std::string_view prompt, double hallucination_rate, std::uint64_t run_seed) {
    std::string chunk;
    if (!extract_section(prompt, "Document Chunk", chunk)) throw MockError("not a QA generation prompt");
    const auto sentences = split_sentences(chunk);
    std::vector<std::string> candidates;
    for (const auto& s : sentences) {
        // Whole sentences only: chunk edges cut sentences mid-way.
        const bool whole = std::isupper(static_cast<unsigned char>(s.front())) &&
                           (s.back() == '.' || s.back() == '!' || s.back() == '?');
        if (whole && split_whitespace(s).size() >= 6) candidates.push_back(s);
    }
    const auto key = std::string(prompt);
    json qa;
    if (candidates.empty()) {
        auto words = split_whitespace(chunk);
        if (words.size() < 2) {
            qa["query"] = "What does the passage say?";
            qa["answer"] = trim(chunk);
        } else {
            const auto half = words.size() / 2;
            qa["query"] =
                std::string(kQueryLeadIn) + join({words.begin(), words.begin() + static_cast<std::ptrdiff_t>(half)});
            words.back() = strip_trailing_punct(words.back());
            qa["answer"] = join({words.begin() + static_cast<std::ptrdiff_t>(half), words.end()});
        }
    } else {
        const auto& sentence = candidates[derive_seed(run_seed, "pick|" + key) % candidates.size()];
        auto words = split_whitespace(sentence);
        const std::size_t cut = words.size() - 3;
        qa["query"] = std::string(kQueryLeadIn) + join({words.begin(), words.begin() + static_cast<std::ptrdiff_t>(cut)});
        words.back() = strip_trailing_punct(words.back());
        qa["answer"] = join({words.begin() + static_cast<std::ptrdiff_t>(cut), words.end()});
    }
    if (unit_hash(run_seed, "hallucinate|" + key) < hallucination_rate) {
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(derive_seed(run_seed, key)));
        qa["answer"] = std::string("Qx") + buf;
    }
    qa["category"] = "fact";
    return "```json\n" + qa.dump(2) + "\n```";
}

HashingEmbeddingProvider::HashingEmbeddingProvider(std::size_t dimension, std::map<std::string, std::vector<float>> fixed)
    : dimension_(dimension), fixed_(std::move(fixed)) {
    if (dimension_ == 0) throw ArgumentError("embedding dimension must be positive");
    for (const auto& [text, v] : fixed_) {
        if (v.size() != dimension_) throw ArgumentError("fixed embedding has the wrong dimension");
    }
}

std::vector<std::vector<float>> HashingEmbeddingProvider::embed(const std::vector<std::string>& texts) {
    ++calls_;
    auto left = failures_.load();
    while (left > 0 && !failures_.compare_exchange_weak(left, left - 1)) {
    }
    if (left > 0) throw ProviderError("scripted embedding failure", 503);

    std::vector<std::vector<float>> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        if (auto it = fixed_.find(text); it != fixed_.end()) {
            out.push_back(it->second);
            continue;
        }
        std::vector<float> v(dimension_, 0.0f);
        for (const auto& t : normalized_tokens(text)) v[fnv1a64(t) % dimension_] += 1.0f;
        double norm = 0.0;
        for (float x : v) norm += static_cast<double>(x) * x;
        if (norm > 0.0) {
            const auto inv = static_cast<float>(1.0 / std::sqrt(norm));
            for (auto& x : v) x *= inv;
        }
        out.push_back(std::move(v));
    }
    return out;
}

}  // namespace ragalign::mock
