#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ragalign/gateway.hpp"
#include "ragalign/prompts.hpp"
#include "ragalign/retrieval.hpp"

namespace ragalign::mock {

/// Lead-in used by the mock QA writer; the mock generators look for it to
/// find the answer-bearing sentence without any side channel.
inline constexpr std::string_view kQueryLeadIn = "Complete the statement: ";

enum class Behavior {
    echo_answer,        // always the correct, concise answer (tier 1.0)
    quality_tier,       // correct with probability `tier`
    position_zero_only, // correct only when the answer sits in "Chunk 1"
    fixed_json,         // returns `payload` serialized
    fixed_text,         // returns `text`
    fail,               // HTTP 500 for the first `fail_times` calls, then `then`
    replay,             // looks responses up in a recording file
    qa_writer,          // answers the QA generation template
    support_judge,      // answers the validity check template
    inclusion_judge,    // answers the LLMEval template
    judge,              // support_judge or inclusion_judge, whichever template the prompt is
};

std::string_view to_string(Behavior b);
Behavior parse_behavior(std::string_view text);

struct Script {
    Behavior behavior = Behavior::echo_answer;
    double tier = 1.0;
    json payload = json::object();
    std::string text;
    std::size_t fail_times = 0;
    int fail_status = 500;
    std::shared_ptr<Script> then;  // fail: what to do once the failures are spent
    std::filesystem::path recording;
    double hallucination_rate = 0.0;  // qa_writer: share of answers absent from the chunk
    double inclusion_threshold = 0.6; // inclusion_judge: share of true-answer tokens required
    std::uint32_t min_delay_ms = 0;   // per-request delay drawn from the prompt hash
    std::uint32_t max_delay_ms = 0;

    static Script from_json(const json& j);
};

/// Scripted chat backend. Responses are a pure function of (prompt,
/// provider_id, run seed) except for the fail counter, which is per instance.
class ScriptedBackend : public ChatBackend {
public:
    ScriptedBackend(Script script, std::uint64_t run_seed = 0);
    BackendReply send(const ChatRequest& request) override;

    std::size_t calls() const noexcept { return calls_; }
    std::size_t max_concurrency() const noexcept { return max_concurrency_; }

private:
    BackendReply respond(const Script& script, const ChatRequest& request);

    Script script_;
    std::uint64_t run_seed_;
    std::atomic<std::size_t> calls_{0};
    std::atomic<std::size_t> in_flight_{0};
    std::atomic<std::size_t> max_concurrency_{0};
    std::atomic<std::size_t> failures_left_{0};
    std::mutex replay_mutex_;
    std::optional<std::map<std::string, std::string>> replay_by_hash_;
    std::map<std::string, std::string> replay_by_prompt_;
};

/// Wraps a backend and appends {request_hash, prompt, response_text} for
/// every successful reply to a recording file.
class RecordingBackend : public ChatBackend {
public:
    RecordingBackend(std::shared_ptr<ChatBackend> inner, std::filesystem::path recording);
    BackendReply send(const ChatRequest& request) override;

private:
    std::shared_ptr<ChatBackend> inner_;
    std::filesystem::path path_;
    std::mutex mutex_;
};

// Building blocks of the scripted responses, exposed for tests.

/// Splits text into sentences ending in '.', '!' or '?'.
std::vector<std::string> split_sentences(std::string_view text);

struct AnswerLocation {
    std::size_t chunk_index = 0;  // 0-based position in the prompt's chunk list
    std::string sentence;
    std::string answer;
};

/// Finds the sentence a mock-written query points at.
std::optional<AnswerLocation> locate_answer(const Ext2GenPromptView& view);

/// Ext2gen completion for a generator of the given tier.
std::string quality_tier_generate(std::string_view prompt, double tier, std::string_view provider_id,
                                  std::uint64_t run_seed);

/// Mock QA writer response for a qa_gen prompt (a fenced JSON object).
std::string write_qa(std::string_view prompt, double hallucination_rate, std::uint64_t run_seed);

/// Deterministic bag-of-words embedder (feature hashing) for dense retrieval
/// tests. Texts listed in `fixed` get exactly the given vectors.
class HashingEmbeddingProvider : public EmbeddingProvider {
public:
    explicit HashingEmbeddingProvider(std::size_t dimension = 256,
                                      std::map<std::string, std::vector<float>> fixed = {});
    std::string model_identifier() const override { return "hashing-" + std::to_string(dimension_); }
    std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override;

    std::size_t calls() const noexcept { return calls_; }
    /// Fail the next n calls with ProviderError.
    void fail_next(std::size_t n) { failures_ = n; }

private:
    std::size_t dimension_;
    std::map<std::string, std::vector<float>> fixed_;
    std::atomic<std::size_t> calls_{0};
    std::atomic<std::size_t> failures_{0};
};

}  // namespace ragalign::mock
