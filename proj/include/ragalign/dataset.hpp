#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ragalign/corpus.hpp"
#include "ragalign/gateway.hpp"
#include "ragalign/retrieval.hpp"

namespace ragalign {

enum class QACategory { fact, instruction, definition, opinion, yes_no, human_sourced, unlabeled };
enum class QAStatus { raw, filtered_ok, dropped };

std::string_view to_string(QACategory category);
QACategory parse_category(std::string_view text);
std::string_view to_string(QAStatus status);
QAStatus parse_status(std::string_view text);

struct QAInstance {
    std::string qa_id;
    std::string query;
    std::string answer;
    QACategory category = QACategory::unlabeled;
    std::string relevant_chunk_id;
    std::vector<std::string> noisy_chunk_ids;
    QAStatus status = QAStatus::raw;

    bool operator==(const QAInstance&) const = default;
};

json to_json(const QAInstance& qa);
QAInstance qa_from_json(const json& j);

/// One consolidated chunk list for a query.
struct NoisyInput {
    std::string input_id;
    std::string qa_id;
    std::vector<std::string> chunk_ids;
    std::size_t relevant_position = 0;
    std::size_t m = 0;  // number of noisy chunks in chunk_ids
    std::uint64_t seed = 0;

    bool operator==(const NoisyInput&) const = default;
};

json to_json(const NoisyInput& input);
NoisyInput noisy_input_from_json(const json& j);

inline constexpr std::size_t kMaxNoise = 25;
inline constexpr std::size_t kJudgeAttempts = 3;

/// Asks the writer for one QA pair about the chunk. Code fences and prose
/// around the JSON object are tolerated; malformed output is re-asked twice
/// before QAGenError(parse).
QAInstance generate_qa(const Chunk& chunk, Gateway& gateway, const ProviderSpec& writer);

/// Top-k lexical hits for the query minus copies of the relevant chunk.
std::vector<std::string> retrieve_noisy_ids(const QAInstance& qa, const LexicalIndex& index, const ChunkStore& store,
                                            std::size_t k);

enum class SupportVerdict { supported, not_supported };

/// Validity check: does the chunk fully support the answer?
SupportVerdict check_support(std::string_view query, std::string_view answer, std::string_view chunk_text,
                             Gateway& gateway, const ProviderSpec& judge);

struct FilterOutcome {
    QAInstance qa;
    std::vector<std::string> removed_chunk_ids;  // noisy chunks judged Supported
    std::size_t noisy_judge_errors = 0;          // noisy checks that never parsed (chunk removed)
    bool relevant_judge_error = false;           // qa left raw for a later retry
};

/// Answer validation on the relevant chunk, then chunk validation on every
/// noisy chunk. Never adds chunks or edits the query/answer.
FilterOutcome filter_instance(const QAInstance& qa, const ChunkStore& store, Gateway& gateway,
                              const ProviderSpec& judge, std::size_t workers = 1);

enum class ConsolidateMode { train, sweep };

struct ConsolidateParams {
    std::size_t max_noise = kMaxNoise;           // train mode upper bound for m
    std::size_t m = 0;                           // sweep mode
    std::size_t relevant_position = 0;           // sweep mode
    std::string tag;                             // distinguishes sweep cells; part of id and seed
};

struct Consolidation {
    NoisyInput input;
    std::size_t drawn_m = 0;  // train mode draw before capping at the pool size
    bool capped = false;
};

/// Train mode: m ~ Uniform{0..max_noise} capped at the pool size, m noisy ids
/// sampled without replacement, relevant inserted, list shuffled. Sweep mode:
/// exactly m noisy ids with the relevant one at relevant_position.
Consolidation consolidate_input(const QAInstance& qa, ConsolidateMode mode, const ConsolidateParams& params,
                                std::uint64_t global_seed);

}  // namespace ragalign
