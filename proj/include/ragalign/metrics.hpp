#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ragalign/gateway.hpp"
#include "ragalign/parser.hpp"

namespace ragalign {

/// The four QA scores of one completion against the true answer. The
/// inclusion fields stay unset when their scorer failed.
struct MetricVector {
    std::optional<int> acc;       // {0,1}
    std::optional<int> llm_eval;  // {0,1}
    std::optional<double> rouge_l;
    std::optional<double> bert;

    bool complete() const noexcept { return acc && llm_eval && rouge_l && bert; }
    /// Mean of the four fields; requires complete().
    double avg() const;

    bool operator==(const MetricVector&) const = default;
};

MetricVector make_metrics(int acc, int llm_eval, double rouge_l, double bert);

json to_json(const MetricVector& mv);
MetricVector metrics_from_json(const json& j);

/// 1 iff the normalized true answer is a substring of the normalized prediction.
int accuracy(std::string_view true_answer, std::string_view predicted);

/// Longest common subsequence length over token sequences.
std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// ROUGE-L F1 over normalized whitespace tokens.
double rouge_l_f1(std::string_view reference, std::string_view candidate);
double rouge_l_f1_tokens(const std::vector<std::string>& reference, const std::vector<std::string>& candidate);

struct TokenEmbeddingSequence {
    std::vector<std::string> tokens;
    std::vector<std::vector<float>> vectors;  // unit norm, one per token
};

/// Greedy-matching BERTScore F1: no idf weighting, no baseline rescaling,
/// similarities clamped to [0,1]. Throws MetricError on empty input.
double bert_score_f1(const TokenEmbeddingSequence& ref, const TokenEmbeddingSequence& cand);

/// Source of contextual per-token embeddings.
class TokenEmbedder {
public:
    virtual ~TokenEmbedder() = default;
    virtual std::string model_identifier() const = 0;
    virtual TokenEmbeddingSequence embed_tokens(std::string_view text) = 0;
};

/// Each distinct normalized token gets its own axis, so cosine is 1 for equal
/// tokens and 0 otherwise. Dimension is fixed at construction.
class OneHotTokenEmbedder : public TokenEmbedder {
public:
    explicit OneHotTokenEmbedder(std::size_t dimension = 8192);
    std::string model_identifier() const override { return "one-hot"; }
    TokenEmbeddingSequence embed_tokens(std::string_view text) override;
    std::size_t vocabulary_size() const;

private:
    std::size_t dimension_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, std::size_t> vocab_;
};

/// Token embedding endpoint: POST {"model", "text"} -> {"tokens": [...],
/// "vectors": [[...], ...]}. Vectors are re-normalized on receipt.
class HttpTokenEmbedder : public TokenEmbedder {
public:
    HttpTokenEmbedder(std::string endpoint, std::string model, std::string api_key = {}, int timeout_seconds = 60);
    std::string model_identifier() const override { return model_; }
    TokenEmbeddingSequence embed_tokens(std::string_view text) override;

private:
    std::string endpoint_;
    std::string model_;
    std::string api_key_;
    int timeout_seconds_;
};

/// Asks the judge whether the prediction carries the true answer's core
/// content. Parse failures after `max_attempts` raise JudgeError.
int llm_eval(Gateway& gateway, const ProviderSpec& judge, std::string_view query, std::string_view true_answer,
             std::string_view predicted, std::size_t max_attempts = 3);

struct ScoringContext {
    Gateway& gateway;
    const ProviderSpec& judge;
    TokenEmbedder& embedder;
};

/// Applies the four metrics to parsed.answer. LLMEval failures leave that
/// field unset; other errors propagate.
MetricVector score_completion(std::string_view query, std::string_view true_answer, const ParsedCompletion& parsed,
                              ScoringContext ctx);

}  // namespace ragalign
