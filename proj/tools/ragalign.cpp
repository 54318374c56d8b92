#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "ragalign/errors.hpp"
#include "ragalign/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kConfigError = 2, kStageError = 3, kProviderExhausted = 4 };

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    bool resume = false;
    std::optional<std::string> rule;
    std::optional<double> epsilon;
    std::optional<std::size_t> k;
    bool mock = false;
    std::optional<std::string> out;
};

void add_flags(CLI::App* cmd, Options& o) {
    cmd->add_option("--config", o.config, "pipeline config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "global seed");
    cmd->add_option("--workers", o.workers, "parallel workers within a stage")->check(CLI::PositiveNumber);
    cmd->add_flag("--resume", o.resume, "skip stages whose manifest matches the current config");
    cmd->add_option("--rule", o.rule, "pair composition rule")->check(CLI::IsMember({"R1", "R2"}));
    cmd->add_option("--epsilon", o.epsilon, "similarity margin for R2")->check(CLI::NonNegativeNumber);
    cmd->add_option("--k", o.k, "retrieval depth")->check(CLI::PositiveNumber);
    cmd->add_flag("--mock", o.mock, "replace every provider with its scripted mock");
    cmd->add_option("--out", o.out, "working directory");
}

ragalign::PipelineConfig effective_config(const Options& o) {
    auto cfg = ragalign::load_config(o.config);
    if (o.seed) cfg.seed = *o.seed;
    for (auto& s : cfg.sweeps) s.spec.seed = cfg.seed;
    if (o.workers) cfg.workers = *o.workers;
    if (o.rule) cfg.composer.rule = ragalign::parse_rule(*o.rule);
    if (o.epsilon) cfg.composer.epsilon = *o.epsilon;
    if (o.k) cfg.k = *o.k;
    if (o.mock) cfg.mock = true;
    if (o.out) cfg.workdir = *o.out;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("ragalign"));

    CLI::App app{"ragalign: noisy-retrieval preference data pipeline"};
    app.require_subcommand(1);
    Options opts;
    std::vector<std::pair<CLI::App*, std::optional<ragalign::Stage>>> commands;
    for (const char* name : {"ingest", "chunk", "index", "qagen", "filter", "consolidate", "generate", "score",
                             "compose", "emit", "sweep", "report"}) {
        auto* cmd = app.add_subcommand(name, std::string("run the ") + name + " stage");
        add_flags(cmd, opts);
        commands.emplace_back(cmd, ragalign::parse_stage(name));
    }
    auto* run_all = app.add_subcommand("run", "run ingest through emit");
    add_flags(run_all, opts);
    commands.emplace_back(run_all, std::nullopt);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigError;
    }

    try {
        ragalign::Pipeline pipeline(effective_config(opts), opts.resume);
        std::vector<ragalign::StageManifest> manifests;
        for (const auto& [cmd, stage] : commands) {
            if (!cmd->parsed()) continue;
            if (stage)
                manifests.push_back(pipeline.run(*stage));
            else
                manifests = pipeline.run_training();
        }
        for (const auto& m : manifests) {
            auto j = ragalign::to_json(m);
            j["skipped"] = m.skipped;
            std::cout << j.dump() << '\n';
        }
        return kOk;
    } catch (const ragalign::ConfigError& e) {
        spdlog::error("config error: {}", e.what());
        return kConfigError;
    } catch (const ragalign::ProviderError& e) {
        spdlog::error("provider exhausted: {}", e.what());
        return kProviderExhausted;
    } catch (const ragalign::Error& e) {
        spdlog::error("stage error: {}", e.what());
        return kStageError;
    } catch (const std::exception& e) {
        spdlog::error("stage error: {}", e.what());
        return kStageError;
    }
}
