#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ragalign/composer.hpp"
#include "ragalign/corpus.hpp"
#include "ragalign/errors.hpp"
#include "ragalign/gateway.hpp"
#include "ragalign/harness.hpp"

namespace ragalign {

struct CorpusEntry {
    std::filesystem::path path;
    std::string source;
    Split split = Split::train;
};

struct SweepConfig {
    std::string endpoint;
    SweepSpec spec;
};

struct PipelineConfig {
    std::vector<CorpusEntry> corpus;
    std::filesystem::path workdir;
    ChunkConfig chunking;
    std::size_t k = 30;
    std::string retrieval_mode = "lexical";  // or "dense"
    json embedding = json::object();         // dense retrieval endpoint {endpoint, model}
    json token_embedder = json::object();    // {"kind": "one_hot"} or {"kind": "http", endpoint, model}
    std::vector<ProviderSpec> providers;
    std::string writer;
    std::string judge;
    std::vector<std::string> generators;  // empty: every provider with the generator role
    std::optional<std::size_t> max_qa;    // cap on train chunks sent to the writer
    ComposerConfig composer;
    SftCriterion sft = SftCriterion::best_avg;
    std::size_t test_per_source = 2;
    std::vector<SweepConfig> sweeps;
    std::uint64_t seed = 0;
    std::size_t workers = 4;
    bool mock = false;

    /// Re-validates cross references (provider ids, roles, sweep specs).
    void validate() const;
    /// Canonical form; excludes workdir and workers, which do not affect outputs.
    json canonical() const;
    std::string hash() const;
};

/// Reads a JSON config; relative corpus paths resolve against the config's
/// directory. Throws ConfigError.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig config_from_json(const json& j, const std::filesystem::path& base_dir);

enum class Stage { ingest, chunk, index, qagen, filter, consolidate, generate, score, compose, emit, sweep, report };

std::string_view to_string(Stage stage);
Stage parse_stage(std::string_view text);
/// ingest through emit.
const std::vector<Stage>& training_stages();

struct StageManifest {
    std::string stage;
    std::vector<std::string> inputs;   // files read, relative to the workdir
    std::vector<std::string> outputs;  // files written
    std::size_t input_count = 0;
    std::size_t output_count = 0;
    std::map<std::string, std::size_t> drops;
    json counts = json::object();  // stage-specific statistics
    std::uint64_t seed = 0;
    std::string config_hash;
    bool skipped = false;  // set when --resume reused an earlier run; not persisted

    /// input_count == output_count + sum(drops)
    bool reconciles() const;
};

json to_json(const StageManifest& m);
StageManifest manifest_from_json(const json& j);

/// Raised when every request to some provider failed after retries.
class ProviderExhausted : public ProviderError {
public:
    using ProviderError::ProviderError;
};

class Pipeline {
public:
    explicit Pipeline(PipelineConfig cfg, bool resume = false);
    ~Pipeline();

    StageManifest run(Stage stage);
    std::vector<StageManifest> run_training();

    const PipelineConfig& config() const noexcept { return cfg_; }
    const std::filesystem::path& workdir() const noexcept { return cfg_.workdir; }
    std::filesystem::path manifest_path(Stage stage) const;
    Gateway& gateway() noexcept { return *gateway_; }

private:
    StageManifest run_ingest();
    StageManifest run_chunk();
    StageManifest run_index();
    StageManifest run_qagen();
    StageManifest run_filter();
    StageManifest run_consolidate();
    StageManifest run_generate();
    StageManifest run_score();
    StageManifest run_compose();
    StageManifest run_emit();
    StageManifest run_sweep_stage();
    StageManifest run_report();

    std::filesystem::path require(const std::string& name) const;
    std::filesystem::path out(const std::string& name) const;
    std::vector<ProviderSpec> generator_pool() const;
    const ProviderSpec& provider(const std::string& id) const;
    TokenEmbedder& embedder();
    std::string pairs_file() const;

    PipelineConfig cfg_;
    bool resume_;
    std::string hash_;
    std::unique_ptr<Gateway> gateway_;
    std::unique_ptr<TokenEmbedder> embedder_;
};

}  // namespace ragalign
