#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ragalign/metrics.hpp"

namespace ragalign {

enum class Rule { R1, R2 };

std::string_view to_string(Rule rule);
Rule parse_rule(std::string_view text);

inline constexpr double kDefaultEpsilon = 0.30;

struct ComposerConfig {
    Rule rule = Rule::R2;
    double epsilon = kDefaultEpsilon;
    std::optional<std::size_t> max_pairs_per_input;  // unset = unlimited

    void validate() const;
};

/// A scored completion of one input, referenced by its provider id.
struct ScoredCompletion {
    std::string ref;
    MetricVector metrics;
};

struct FeedbackPair {
    std::string input_id;
    std::string chosen;
    std::string rejected;
    Rule rule = Rule::R1;
    int inclusion_gap = 0;
    std::optional<double> similarity_gap;  // set for pairs formed by the similarity tiebreak

    bool operator==(const FeedbackPair&) const = default;
};

json to_json(const FeedbackPair& pair);
FeedbackPair feedback_pair_from_json(const json& j);

struct BinaryExample {
    std::string input_id;
    std::string completion;
    int label = 0;

    bool operator==(const BinaryExample&) const = default;
};

json to_json(const BinaryExample& example);
BinaryExample binary_example_from_json(const json& j);

/// acc + llm_eval >= 1. Throws ComposerError when either is unset.
bool is_chosen(const MetricVector& mv);

/// acc + llm_eval. Throws ComposerError when either is unset.
int inclusion_sum(const MetricVector& mv);

/// Literal pairwise conditions, used by the composer and the emit validator.
bool rule1_prefers(const MetricVector& i, const MetricVector& j);
bool rule2_tie_prefers(const MetricVector& i, const MetricVector& j, double epsilon);
bool pair_satisfies(Rule rule, const MetricVector& chosen, const MetricVector& rejected, double epsilon);

/// Pairs ordered by (chosen, rejected) ref.
std::vector<FeedbackPair> compose_pairs_rule1(std::string_view input_id, const std::vector<ScoredCompletion>& completions);
std::vector<FeedbackPair> compose_pairs_rule2(std::string_view input_id, const std::vector<ScoredCompletion>& completions,
                                              const ComposerConfig& cfg);

struct ComposeResult {
    std::vector<FeedbackPair> pairs;
    std::vector<std::string> skipped;  // refs with unscored fields
};

/// Drops incompletely scored completions, composes under cfg.rule and applies
/// the per-input cap (largest inclusion gap, then similarity gap, first).
ComposeResult compose_pairs(std::string_view input_id, const std::vector<ScoredCompletion>& completions,
                            const ComposerConfig& cfg);

/// Chosen in any pair -> 1, only ever rejected -> 0. Sorted by (input_id, completion).
std::vector<BinaryExample> to_kto(const std::vector<FeedbackPair>& pairs);

enum class SftCriterion { best_avg, acc, llm_eval, rouge, bert };

std::string_view to_string(SftCriterion c);
SftCriterion parse_sft_criterion(std::string_view text);

/// Argmax under the criterion; ties by higher avg, then smaller ref.
/// Incomplete vectors are ignored; none left -> ComposerError.
std::string select_sft_reference(const std::vector<ScoredCompletion>& completions, SftCriterion criterion);

/// Everything the emitters need to know about one completion.
struct CompletionEntry {
    std::string prompt;     // rendered ext2gen prompt of the input
    std::string text;       // canonical rendered completion
    MetricVector metrics;
};

/// Completions keyed by (input_id, ref).
using CompletionTable = std::map<std::pair<std::string, std::string>, CompletionEntry>;

struct DpoRecord {
    std::string prompt, chosen, rejected;
    bool operator==(const DpoRecord&) const = default;
};
struct KtoRecord {
    std::string prompt, completion;
    int label = 0;
    bool operator==(const KtoRecord&) const = default;
};
struct SftRecord {
    std::string prompt, completion;
    bool operator==(const SftRecord&) const = default;
};

struct SftChoice {
    std::string input_id;
    std::string ref;
};

/// Each emitter validates every record first and throws EmitError carrying the
/// offending record index; nothing is written in that case.
std::vector<DpoRecord> emit_dpo_pairs(const std::vector<FeedbackPair>& pairs, const CompletionTable& table,
                                      double epsilon, const std::filesystem::path& out);
std::vector<KtoRecord> emit_kto_binary(const std::vector<BinaryExample>& examples, const CompletionTable& table,
                                       const std::filesystem::path& out);
std::vector<SftRecord> emit_sft(const std::vector<SftChoice>& choices, const CompletionTable& table,
                                const std::filesystem::path& out);

std::vector<DpoRecord> read_dpo_pairs(const std::filesystem::path& path);
std::vector<KtoRecord> read_kto_binary(const std::filesystem::path& path);
std::vector<SftRecord> read_sft(const std::filesystem::path& path);

struct PoolShare {
    std::string provider_id;
    std::size_t chosen = 0;
    std::size_t rejected = 0;
    double chosen_pct = 0.0;    // share of all chosen slots
    double rejected_pct = 0.0;  // share of all rejected slots
};

/// One row per provider in the given order; empty when there are no pairs.
std::vector<PoolShare> pool_distribution_report(const std::vector<FeedbackPair>& pairs,
                                                const std::vector<std::string>& provider_ids);

}  // namespace ragalign
