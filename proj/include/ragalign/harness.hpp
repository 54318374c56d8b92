#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ragalign/dataset.hpp"
#include "ragalign/metrics.hpp"
#include "ragalign/parser.hpp"

namespace ragalign {

struct ExtractionScores {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t unattributed = 0;  // sentences found in none of the input's chunks
};

/// A sentence is attributed to a chunk when its normalized form is a
/// substring of the chunk's normalized text. `chunks` is the input's chunk
/// list as (chunk_id, text).
ExtractionScores extraction_prf(const ParsedCompletion& parsed, const std::vector<std::string>& relevant_chunk_ids,
                                const std::vector<std::pair<std::string, std::string>>& chunks);

struct TestSetConfig {
    std::size_t per_source_count = 200;
    std::size_t k = 30;  // retrieval depth for noisy candidates
    std::uint64_t seed = 0;
    std::size_t workers = 1;
};

struct TestSet {
    std::vector<QAInstance> instances;  // filtered_ok, ordered by source then draw
    std::vector<NoisyInput> inputs;     // one train-mode consolidation per instance
};

/// Generates, filters and consolidates test QA pairs from the test split of
/// every source present in `chunks`. Chunks are drawn per source in seeded
/// order until per_source_count instances survive filtering. A source without
/// enough test chunks raises BuildError.
TestSet build_test_set(const std::vector<Chunk>& chunks, Gateway& gateway, const ProviderSpec& writer,
                       const ProviderSpec& judge, const TestSetConfig& cfg);

enum class SweepAxis { position, noise };

std::string_view to_string(SweepAxis axis);
SweepAxis parse_axis(std::string_view text);

struct SweepSpec {
    SweepAxis axis = SweepAxis::position;
    std::vector<std::size_t> values;
    std::size_t fixed_m = kMaxNoise;  // position axis
    std::size_t repetitions = 1;
    std::uint64_t seed = 0;

    void validate() const;
};

enum class SlotStatus { scored, noncompliant, error };

struct InstanceResult {
    std::size_t value = 0;
    std::size_t repetition = 0;
    std::string input_id;
    SlotStatus status = SlotStatus::error;
    std::string error;
    MetricVector metrics;
    ExtractionScores extraction;
    std::size_t sentence_count = 0;
    std::size_t sentence_words = 0;
    std::size_t answer_words = 0;
    double latency_s = 0.0;
};

struct SweepPoint {
    std::size_t value = 0;
    std::size_t attempted = 0;
    std::size_t scored = 0;        // compliant and fully scored
    std::size_t noncompliant = 0;  // scored as zeros
    std::size_t errors = 0;
    double acc = 0, llm_eval = 0, rouge_l = 0, bert = 0, avg = 0;
    double precision = 0, recall = 0, f1 = 0;
    double compliant_rate = 0;
    double mean_sentences = 0, mean_sentence_words = 0, mean_answer_words = 0, mean_latency_s = 0;
    std::size_t unattributed = 0;
};

struct SweepReport {
    SweepAxis axis = SweepAxis::position;
    std::string endpoint;
    std::size_t repetitions = 0;
    std::vector<InstanceResult> results;  // ordered by (value, repetition, input_id)

    /// Aggregates per sweep value; avg is the mean of the four metric means.
    std::vector<SweepPoint> points() const;
    /// False when any slot ended in an error.
    bool full_coverage() const;
};

json to_json(const SweepReport& report);
SweepReport sweep_report_from_json(const json& j);

struct SweepContext {
    Gateway& gateway;
    const ProviderSpec& judge;
    TokenEmbedder& embedder;
    const ChunkStore& store;
    std::size_t workers = 1;
};

/// Rebuilds every instance's chunk list with the swept variable fixed,
/// prompts the endpoint, parses and scores. Instances that cannot be
/// consolidated (too few noisy chunks) or whose request fails become error
/// slots. Noncompliant outputs score zero on every metric.
SweepReport run_sweep(const ProviderSpec& endpoint, const std::vector<QAInstance>& test_set, const SweepSpec& spec,
                      SweepContext ctx);

struct ReportFiles {
    std::vector<std::filesystem::path> csv;
    std::filesystem::path summary;
};

/// One CSV per axis (reports on the same axis are merged) plus summary.json.
ReportFiles aggregate_report(const std::vector<SweepReport>& reports, const std::filesystem::path& out_dir);

}  // namespace ragalign
