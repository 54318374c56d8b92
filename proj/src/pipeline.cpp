#include "ragalign/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <mutex>
#include <random>
#include <set>

#include <spdlog/spdlog.h>

#include "ragalign/dataset.hpp"
#include "ragalign/errors.hpp"
#include "ragalign/mock.hpp"
#include "ragalign/parser.hpp"
#include "ragalign/prompts.hpp"
#include "ragalign/retrieval.hpp"

namespace ragalign {

namespace fs = std::filesystem;

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.is_object() || !j.contains(key) || j[key].is_null()) return fallback;
    return j[key].get<T>();
}

json default_mock(ProviderRole role) {
    switch (role) {
        case ProviderRole::generator: return json{{"behavior", "echo_answer"}};
        case ProviderRole::qa_writer: return json{{"behavior", "qa_writer"}};
        case ProviderRole::judge:
        case ProviderRole::filter: return json{{"behavior", "judge"}};
    }
    return json::object();
}

std::string ext2gen_prompt(const QAInstance& qa, const NoisyInput& input, const ChunkStore& store) {
    std::vector<std::string> texts;
    texts.reserve(input.chunk_ids.size());
    for (const auto& id : input.chunk_ids) texts.push_back(store.at(id).text);
    return render_prompt(TemplateId::ext2gen, {{"query", qa.query}, {"chunk_list", texts}});
}

std::map<std::string, QAInstance> qa_by_id(const fs::path& path) {
    std::map<std::string, QAInstance> out;
    for (const auto& j : read_jsonl(path)) {
        auto qa = qa_from_json(j);
        out.emplace(qa.qa_id, std::move(qa));
    }
    return out;
}

std::vector<NoisyInput> read_inputs(const fs::path& path) {
    std::vector<NoisyInput> out;
    for (const auto& j : read_jsonl(path)) out.push_back(noisy_input_from_json(j));
    return out;
}

json pair_line(const FeedbackPair& p) {
    auto j = to_json(p);
    j.erase("rule");
    return j;
}

}  // namespace

void PipelineConfig::validate() const {
    if (corpus.empty()) throw ConfigError("config lists no corpus files");
    try {
        chunking.validate();
        composer.validate();
        for (const auto& s : sweeps) s.spec.validate();
    } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
    }
    if (k == 0) throw ConfigError("retrieval k must be positive");
    if (retrieval_mode != "lexical" && retrieval_mode != "dense")
        throw ConfigError("retrieval mode must be lexical or dense");
    if (workers == 0) throw ConfigError("workers must be positive");
    std::set<std::string> ids;
    for (const auto& p : providers) ids.insert(p.provider_id);
    auto known = [&](const std::string& id, const char* what) {
        if (!ids.count(id)) throw ConfigError(std::string(what) + " refers to unknown provider '" + id + "'");
    };
    known(writer, "writer");
    known(judge, "judge");
    for (const auto& g : generators) known(g, "generators");
    for (const auto& s : sweeps) known(s.endpoint, "sweep endpoint");
}

json PipelineConfig::canonical() const {
    json corpus_json = json::array();
    for (const auto& c : corpus) {
        std::string digest;
        try {
            digest = sha256_hex(read_text(c.path));
        } catch (const IoError&) {
            digest = "missing";
        }
        corpus_json.push_back(
            json{{"file", c.path.filename().string()}, {"sha256", digest}, {"source", c.source}, {"split", to_string(c.split)}});
    }
    json pool = json::array();
    for (const auto& p : providers) pool.push_back(to_json(p));
    json sweeps_json = json::array();
    for (const auto& s : sweeps) {
        sweeps_json.push_back(json{{"endpoint", s.endpoint},
                                   {"axis", to_string(s.spec.axis)},
                                   {"values", s.spec.values},
                                   {"fixed_m", s.spec.fixed_m},
                                   {"repetitions", s.spec.repetitions}});
    }
    return json{{"corpus", corpus_json},
                {"chunking", {{"window", chunking.window}, {"overlap", chunking.overlap}}},
                {"retrieval", {{"k", k}, {"mode", retrieval_mode}, {"embedding", embedding}}},
                {"token_embedder", token_embedder},
                {"providers", pool},
                {"roles", {{"writer", writer}, {"judge", judge}, {"generators", generators}}},
                {"max_qa", max_qa ? json(*max_qa) : json(nullptr)},
                {"composer",
                 {{"rule", to_string(composer.rule)},
                  {"epsilon", composer.epsilon},
                  {"max_pairs_per_input", composer.max_pairs_per_input ? json(*composer.max_pairs_per_input) : json(nullptr)},
                  {"sft_criterion", to_string(sft)}}},
                {"test_per_source", test_per_source},
                {"sweeps", sweeps_json},
                {"seed", seed},
                {"mock", mock}};
}

std::string PipelineConfig::hash() const { return sha256_hex(canonical().dump()); }

PipelineConfig config_from_json(const json& j, const fs::path& base_dir) {
    PipelineConfig cfg;
    try {
        for (const auto& c : j.at("corpus")) {
            CorpusEntry e;
            e.path = c.at("path").get<std::string>();
            if (e.path.is_relative()) e.path = base_dir / e.path;
            e.source = c.at("source").get<std::string>();
            e.split = parse_split(c.value("split", std::string{"train"}));
            cfg.corpus.push_back(std::move(e));
        }
        cfg.workdir = get_or<std::string>(j, "workdir", "work");
        if (j.contains("chunking")) {
            cfg.chunking.window = get_or<std::size_t>(j["chunking"], "window", cfg.chunking.window);
            cfg.chunking.overlap = get_or<std::size_t>(j["chunking"], "overlap", cfg.chunking.overlap);
        }
        if (j.contains("retrieval")) {
            const auto& r = j["retrieval"];
            cfg.k = get_or<std::size_t>(r, "k", cfg.k);
            cfg.retrieval_mode = get_or<std::string>(r, "mode", cfg.retrieval_mode);
            cfg.embedding = get_or<json>(r, "embedding", json::object());
        }
        cfg.token_embedder = j.contains("scoring") ? get_or<json>(j["scoring"], "token_embedder", json::object())
                                                   : json::object();
        if (cfg.token_embedder.empty()) cfg.token_embedder = json{{"kind", "one_hot"}};
        cfg.providers = parse_pool(j.at("providers"));
        const auto& roles = j.at("roles");
        cfg.writer = roles.at("writer").get<std::string>();
        cfg.judge = roles.at("judge").get<std::string>();
        cfg.generators = get_or<std::vector<std::string>>(roles, "generators", {});
        if (j.contains("qa") && j["qa"].contains("max_chunks") && !j["qa"]["max_chunks"].is_null())
            cfg.max_qa = j["qa"]["max_chunks"].get<std::size_t>();
        if (j.contains("composer")) {
            const auto& c = j["composer"];
            cfg.composer.rule = parse_rule(get_or<std::string>(c, "rule", "R2"));
            cfg.composer.epsilon = get_or<double>(c, "epsilon", kDefaultEpsilon);
            if (c.contains("max_pairs_per_input") && !c["max_pairs_per_input"].is_null())
                cfg.composer.max_pairs_per_input = c["max_pairs_per_input"].get<std::size_t>();
            cfg.sft = parse_sft_criterion(get_or<std::string>(c, "sft_criterion", "best_avg"));
        }
        if (j.contains("test_set")) cfg.test_per_source = get_or<std::size_t>(j["test_set"], "per_source_count", 2);
        cfg.seed = get_or<std::uint64_t>(j, "seed", 0);
        cfg.workers = get_or<std::size_t>(j, "workers", 4);
        cfg.mock = get_or<bool>(j, "mock", false);
        for (const auto& s : get_or<json>(j, "sweeps", json::array())) {
            SweepConfig sc;
            sc.endpoint = s.at("endpoint").get<std::string>();
            sc.spec.axis = parse_axis(s.at("axis").get<std::string>());
            sc.spec.values = s.at("values").get<std::vector<std::size_t>>();
            sc.spec.fixed_m = get_or<std::size_t>(s, "fixed_m", kMaxNoise);
            sc.spec.repetitions = get_or<std::size_t>(s, "repetitions", 1);
            cfg.sweeps.push_back(std::move(sc));
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    } catch (const ArgumentError& e) {
        throw ConfigError(e.what());
    }
    for (auto& s : cfg.sweeps) s.spec.seed = cfg.seed;
    cfg.validate();
    return cfg;
}

PipelineConfig load_config(const fs::path& path) {
    json j;
    try {
        j = read_json(path);
    } catch (const Error& e) {
        throw ConfigError(std::string("cannot read config: ") + e.what());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return config_from_json(j, path.parent_path());
}

std::string_view to_string(Stage stage) {
    switch (stage) {
        case Stage::ingest: return "ingest";
        case Stage::chunk: return "chunk";
        case Stage::index: return "index";
        case Stage::qagen: return "qagen";
        case Stage::filter: return "filter";
        case Stage::consolidate: return "consolidate";
        case Stage::generate: return "generate";
        case Stage::score: return "score";
        case Stage::compose: return "compose";
        case Stage::emit: return "emit";
        case Stage::sweep: return "sweep";
        case Stage::report: return "report";
    }
    return "unknown";
}

Stage parse_stage(std::string_view text) {
    for (auto s : {Stage::ingest, Stage::chunk, Stage::index, Stage::qagen, Stage::filter, Stage::consolidate,
                   Stage::generate, Stage::score, Stage::compose, Stage::emit, Stage::sweep, Stage::report}) {
        if (to_string(s) == text) return s;
    }
    throw ArgumentError("unknown stage: " + std::string(text));
}

const std::vector<Stage>& training_stages() {
    static const std::vector<Stage> stages{Stage::ingest,      Stage::chunk,    Stage::index, Stage::qagen,
                                           Stage::filter,      Stage::consolidate, Stage::generate, Stage::score,
                                           Stage::compose,     Stage::emit};
    return stages;
}

bool StageManifest::reconciles() const {
    std::size_t dropped = 0;
    for (const auto& [reason, n] : drops) dropped += n;
    return input_count == output_count + dropped;
}

json to_json(const StageManifest& m) {
    return json{{"stage", m.stage},
                {"inputs", m.inputs},
                {"outputs", m.outputs},
                {"input_count", m.input_count},
                {"output_count", m.output_count},
                {"drops", m.drops},
                {"counts", m.counts},
                {"seed", m.seed},
                {"config_hash", m.config_hash}};
}

StageManifest manifest_from_json(const json& j) {
    StageManifest m;
    m.stage = j.at("stage").get<std::string>();
    m.inputs = j.at("inputs").get<std::vector<std::string>>();
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    m.input_count = j.at("input_count").get<std::size_t>();
    m.output_count = j.at("output_count").get<std::size_t>();
    m.drops = j.at("drops").get<std::map<std::string, std::size_t>>();
    m.counts = j.value("counts", json::object());
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config_hash = j.at("config_hash").get<std::string>();
    return m;
}

Pipeline::Pipeline(PipelineConfig cfg, bool resume) : cfg_(std::move(cfg)), resume_(resume) {
    cfg_.validate();
    hash_ = cfg_.hash();
    fs::create_directories(cfg_.workdir);
    gateway_ = std::make_unique<Gateway>(cfg_.workdir / "cache");
    for (const auto& spec : cfg_.providers) {
        std::shared_ptr<ChatBackend> backend;
        if (cfg_.mock) {
            const auto script = spec.mock.empty() ? default_mock(spec.role) : spec.mock;
            backend = std::make_shared<mock::ScriptedBackend>(mock::Script::from_json(script), cfg_.seed);
        } else {
            const char* key = std::getenv(spec.resolved_api_key_env().c_str());
            backend = std::make_shared<HttpChatBackend>(spec.endpoint, key ? key : "");
        }
        gateway_->register_provider(spec, backend);
    }
    if (cfg_.writer == cfg_.judge)
        spdlog::warn("QA writer and judge are the same provider ({}); filtering is then self-validation", cfg_.writer);
}

Pipeline::~Pipeline() = default;

fs::path Pipeline::manifest_path(Stage stage) const {
    return cfg_.workdir / "manifests" / (std::string(to_string(stage)) + ".manifest.json");
}

fs::path Pipeline::require(const std::string& name) const {
    const auto path = cfg_.workdir / name;
    if (!fs::exists(path)) throw StageError("missing predecessor output: " + path.string());
    return path;
}

fs::path Pipeline::out(const std::string& name) const { return cfg_.workdir / name; }

const ProviderSpec& Pipeline::provider(const std::string& id) const { return gateway_->provider(id); }

std::vector<ProviderSpec> Pipeline::generator_pool() const {
    std::vector<ProviderSpec> pool;
    if (!cfg_.generators.empty()) {
        for (const auto& id : cfg_.generators) pool.push_back(provider(id));
    } else {
        for (const auto& p : cfg_.providers)
            if (p.role == ProviderRole::generator) pool.push_back(p);
    }
    if (pool.empty()) throw ConfigError("no generator providers configured");
    return pool;
}

TokenEmbedder& Pipeline::embedder() {
    if (!embedder_) {
        const auto kind = cfg_.token_embedder.value("kind", std::string{"one_hot"});
        if (kind == "one_hot" || cfg_.mock) {
            embedder_ = std::make_unique<OneHotTokenEmbedder>(cfg_.token_embedder.value("dimension", std::size_t{8192}));
        } else if (kind == "http") {
            const auto key_env = cfg_.token_embedder.value("api_key_env", std::string{"RAGALIGN_API_KEY_EMBEDDER"});
            const char* key = std::getenv(key_env.c_str());
            embedder_ = std::make_unique<HttpTokenEmbedder>(cfg_.token_embedder.at("endpoint").get<std::string>(),
                                                            cfg_.token_embedder.at("model").get<std::string>(),
                                                            key ? key : "");
        } else {
            throw ConfigError("unknown token embedder kind: " + kind);
        }
    }
    return *embedder_;
}

std::string Pipeline::pairs_file() const { return "pairs_" + std::string(to_string(cfg_.composer.rule)) + ".jsonl"; }

StageManifest Pipeline::run(Stage stage) {
    const auto mpath = manifest_path(stage);
    if (resume_ && fs::exists(mpath)) {
        auto previous = manifest_from_json(read_json(mpath));
        if (previous.config_hash != hash_)
            throw StageError("stale: " + std::string(to_string(stage)) + " manifest was written under config " +
                             previous.config_hash.substr(0, 12) + ", current config is " + hash_.substr(0, 12));
        const bool complete = std::all_of(previous.outputs.begin(), previous.outputs.end(),
                                          [&](const std::string& f) { return fs::exists(cfg_.workdir / f); });
        if (complete) {
            spdlog::info("{}: up to date, skipped", to_string(stage));
            previous.skipped = true;
            return previous;
        }
    }

    StageManifest m;
    switch (stage) {
        case Stage::ingest: m = run_ingest(); break;
        case Stage::chunk: m = run_chunk(); break;
        case Stage::index: m = run_index(); break;
        case Stage::qagen: m = run_qagen(); break;
        case Stage::filter: m = run_filter(); break;
        case Stage::consolidate: m = run_consolidate(); break;
        case Stage::generate: m = run_generate(); break;
        case Stage::score: m = run_score(); break;
        case Stage::compose: m = run_compose(); break;
        case Stage::emit: m = run_emit(); break;
        case Stage::sweep: m = run_sweep_stage(); break;
        case Stage::report: m = run_report(); break;
    }
    m.stage = std::string(to_string(stage));
    m.seed = cfg_.seed;
    m.config_hash = hash_;
    write_json(mpath, to_json(m));
    spdlog::info("{}: {} in, {} out", m.stage, m.input_count, m.output_count);
    return m;
}

std::vector<StageManifest> Pipeline::run_training() {
    std::vector<StageManifest> out;
    for (auto s : training_stages()) out.push_back(run(s));
    return out;
}

StageManifest Pipeline::run_ingest() {
    StageManifest m;
    std::vector<json> docs;
    std::set<std::string> ids;
    json per_source = json::object();
    for (const auto& entry : cfg_.corpus) {
        m.inputs.push_back(entry.path.filename().string());
        for (const auto& d : ingest_documents(entry.path, entry.source, entry.split)) {
            if (!ids.insert(d.doc_id).second)
                throw IngestError(IngestError::Kind::duplicate_id, 0,
                                  "document id " + d.doc_id + " appears in more than one corpus file");
            per_source[d.source_tag] = per_source.value(d.source_tag, 0) + 1;
            docs.push_back(to_json(d));
        }
    }
    write_jsonl(out("documents.jsonl"), docs);
    m.outputs = {"documents.jsonl"};
    m.input_count = m.output_count = docs.size();
    m.counts["documents_per_source"] = per_source;
    return m;
}

StageManifest Pipeline::run_chunk() {
    StageManifest m;
    m.inputs = {"documents.jsonl"};
    const auto docs = read_jsonl(require("documents.jsonl"));
    std::vector<Chunk> chunks;
    std::size_t train = 0, test = 0;
    for (const auto& j : docs) {
        const auto doc = document_from_json(j);
        try {
            for (auto& c : chunk_document(doc, cfg_.chunking)) {
                (c.split == Split::train ? train : test)++;
                chunks.push_back(std::move(c));
            }
            ++m.output_count;
        } catch (const ChunkError&) {
            ++m.drops["empty_text"];
        }
    }
    write_chunks(out("chunks.jsonl"), chunks);
    m.outputs = {"chunks.jsonl"};
    m.input_count = docs.size();
    m.counts = {{"chunks", chunks.size()}, {"train_chunks", train}, {"test_chunks", test}};
    return m;
}

StageManifest Pipeline::run_index() {
    StageManifest m;
    m.inputs = {"chunks.jsonl"};
    const auto chunks = read_chunks(require("chunks.jsonl"));
    for (auto split : {Split::train, Split::test}) {
        std::vector<Chunk> part;
        for (const auto& c : chunks)
            if (c.split == split) part.push_back(c);
        const auto name = "index_" + std::string(to_string(split)) + ".json";
        if (part.empty()) {
            m.counts[name] = 0;
            continue;
        }
        const auto index = LexicalIndex::build(part);
        write_json(out(name), index.to_json());
        m.outputs.push_back(name);
        m.counts[name] = index.size();
        m.output_count += index.size();
    }
    m.input_count = chunks.size();
    return m;
}

StageManifest Pipeline::run_qagen() {
    StageManifest m;
    m.inputs = {"chunks.jsonl", "index_train.json"};
    std::vector<Chunk> train;
    for (auto& c : read_chunks(require("chunks.jsonl")))
        if (c.split == Split::train) train.push_back(std::move(c));
    const ChunkStore store(train);

    std::vector<std::size_t> selected(train.size());
    for (std::size_t i = 0; i < selected.size(); ++i) selected[i] = i;
    if (cfg_.max_qa && *cfg_.max_qa < selected.size()) {
        std::mt19937_64 rng(derive_seed(cfg_.seed, "qagen"));
        std::shuffle(selected.begin(), selected.end(), rng);
        selected.resize(*cfg_.max_qa);
        std::sort(selected.begin(), selected.end());
    }

    std::optional<LexicalIndex> index;
    std::unique_ptr<EmbeddingProvider> dense;
    if (cfg_.retrieval_mode == "lexical") {
        index = LexicalIndex::from_json(read_json(require("index_train.json")));
    } else {
        std::shared_ptr<EmbeddingProvider> inner;
        if (cfg_.mock) {
            inner = std::make_shared<mock::HashingEmbeddingProvider>();
        } else {
            const char* key = std::getenv("RAGALIGN_API_KEY_EMBEDDING");
            inner = std::make_shared<HttpEmbeddingProvider>(cfg_.embedding.at("endpoint").get<std::string>(),
                                                            cfg_.embedding.at("model").get<std::string>(), key ? key : "");
        }
        dense = std::make_unique<CachedEmbeddingProvider>(inner, cfg_.workdir / "cache");
    }

    const auto& writer = provider(cfg_.writer);
    enum class Outcome { ok, parse, empty_field, provider };
    std::vector<std::optional<QAInstance>> results(selected.size());
    std::vector<Outcome> outcomes(selected.size(), Outcome::ok);
    std::mutex dense_mutex;
    parallel_for(selected.size(), cfg_.workers, [&](std::size_t i) {
        const auto& chunk = train[selected[i]];
        try {
            auto qa = generate_qa(chunk, *gateway_, writer);
            if (index) {
                qa.noisy_chunk_ids = retrieve_noisy_ids(qa, *index, store, cfg_.k);
            } else {
                std::lock_guard lock(dense_mutex);
                const auto hits = dense_retrieve_top_k(*dense, train, qa.query, cfg_.k);
                for (const auto& c : label_noisy_chunks(hits, chunk, store)) qa.noisy_chunk_ids.push_back(c.chunk_id);
            }
            results[i] = std::move(qa);
        } catch (const QAGenError& e) {
            outcomes[i] = e.kind() == QAGenError::Kind::parse ? Outcome::parse : Outcome::empty_field;
        } catch (const ProviderError& e) {
            spdlog::warn("qagen {}: {}", chunk.chunk_id, e.what());
            outcomes[i] = Outcome::provider;
        }
    });

    std::vector<json> lines;
    for (std::size_t i = 0; i < results.size(); ++i) {
        switch (outcomes[i]) {
            case Outcome::ok: lines.push_back(to_json(*results[i])); break;
            case Outcome::parse: ++m.drops["qagen_parse"]; break;
            case Outcome::empty_field: ++m.drops["qagen_empty_field"]; break;
            case Outcome::provider: ++m.drops["provider_error"]; break;
        }
    }
    if (!selected.empty() && m.drops["provider_error"] == selected.size())
        throw ProviderExhausted("every request to QA writer " + cfg_.writer + " failed");
    if (m.drops["provider_error"] == 0) m.drops.erase("provider_error");

    write_jsonl(out("qa_raw.jsonl"), lines);
    m.outputs = {"qa_raw.jsonl"};
    m.input_count = selected.size();
    m.output_count = lines.size();
    m.counts = {{"train_chunks", train.size()}, {"writer", cfg_.writer}};
    return m;
}

StageManifest Pipeline::run_filter() {
    StageManifest m;
    m.inputs = {"qa_raw.jsonl", "chunks.jsonl"};
    std::vector<QAInstance> raw;
    for (const auto& j : read_jsonl(require("qa_raw.jsonl"))) raw.push_back(qa_from_json(j));
    std::vector<Chunk> train;
    for (auto& c : read_chunks(require("chunks.jsonl")))
        if (c.split == Split::train) train.push_back(std::move(c));
    const ChunkStore store(train);
    const auto& judge = provider(cfg_.judge);

    std::vector<std::optional<FilterOutcome>> outcomes(raw.size());
    parallel_for(raw.size(), cfg_.workers,
                 [&](std::size_t i) { outcomes[i] = filter_instance(raw[i], store, *gateway_, judge, 1); });

    std::vector<json> kept, dropped;
    std::size_t noisy_removed = 0, noisy_errors = 0;
    for (const auto& o : outcomes) {
        noisy_removed += o->removed_chunk_ids.size() - o->noisy_judge_errors;
        noisy_errors += o->noisy_judge_errors;
        if (o->qa.status == QAStatus::filtered_ok) {
            kept.push_back(to_json(o->qa));
            continue;
        }
        auto j = to_json(o->qa);
        j["reason"] = o->relevant_judge_error ? "relevant_judge_error" : "relevant_not_supported";
        ++m.drops[j["reason"].get<std::string>()];
        dropped.push_back(std::move(j));
    }
    write_jsonl(out("qa_filtered.jsonl"), kept);
    write_jsonl(out("qa_dropped.jsonl"), dropped);
    m.outputs = {"qa_filtered.jsonl", "qa_dropped.jsonl"};
    m.input_count = raw.size();
    m.output_count = kept.size();
    m.counts = {{"noisy_removed_supported", noisy_removed}, {"noisy_removed_judge_error", noisy_errors}, {"judge", cfg_.judge}};
    return m;
}

StageManifest Pipeline::run_consolidate() {
    StageManifest m;
    m.inputs = {"qa_filtered.jsonl"};
    const auto qas = read_jsonl(require("qa_filtered.jsonl"));
    std::vector<json> lines;
    std::size_t capped = 0, total_m = 0;
    for (const auto& j : qas) {
        const auto c = consolidate_input(qa_from_json(j), ConsolidateMode::train, {}, cfg_.seed);
        capped += c.capped ? 1 : 0;
        total_m += c.input.m;
        lines.push_back(to_json(c.input));
    }
    write_jsonl(out("inputs.jsonl"), lines);
    m.outputs = {"inputs.jsonl"};
    m.input_count = m.output_count = lines.size();
    m.counts = {{"capped_at_pool_size", capped},
                {"mean_m", lines.empty() ? 0.0 : static_cast<double>(total_m) / static_cast<double>(lines.size())}};
    return m;
}

StageManifest Pipeline::run_generate() {
    StageManifest m;
    m.inputs = {"inputs.jsonl", "qa_filtered.jsonl", "chunks.jsonl"};
    const auto inputs = read_inputs(require("inputs.jsonl"));
    const auto qas = qa_by_id(require("qa_filtered.jsonl"));
    const ChunkStore store(read_chunks(require("chunks.jsonl")));

    std::vector<std::string> prompts;
    prompts.reserve(inputs.size());
    for (const auto& in : inputs) prompts.push_back(ext2gen_prompt(qas.at(in.qa_id), in, store));

    const auto pool = generator_pool();
    std::vector<std::vector<BatchSlot>> slots;
    for (const auto& g : pool) {
        slots.push_back(gateway_->complete_batch(g, prompts));
        const bool all_failed =
            !prompts.empty() && std::none_of(slots.back().begin(), slots.back().end(), [](const BatchSlot& s) { return s.ok(); });
        if (all_failed) throw ProviderExhausted("every request to generator " + g.provider_id + " failed");
    }

    std::vector<json> compliant, rejected;
    json per_provider = json::object();
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (std::size_t g = 0; g < pool.size(); ++g) {
            const auto& slot = slots[g][i];
            if (!slot.ok()) {
                ++m.drops["provider_error"];
                continue;
            }
            auto parsed = parse_completion(slot.completion->text);
            parsed.input_id = inputs[i].input_id;
            parsed.provider_id = pool[g].provider_id;
            auto j = to_json(parsed, slot.completion->text);
            j["latency_ms"] = slot.completion->latency_ms;
            j["request_hash"] = slot.completion->request_hash;
            auto& stats = per_provider[pool[g].provider_id];
            if (stats.is_null()) stats = json{{"compliant", 0}, {"noncompliant", 0}};
            if (parsed.compliant) {
                stats["compliant"] = stats["compliant"].get<int>() + 1;
                compliant.push_back(std::move(j));
            } else {
                stats["noncompliant"] = stats["noncompliant"].get<int>() + 1;
                ++m.drops["noncompliant_" + std::string(to_string(*parsed.reason))];
                rejected.push_back(std::move(j));
            }
        }
    }
    write_jsonl(out("completions.jsonl"), compliant);
    write_jsonl(out("completions_rejected.jsonl"), rejected);
    m.outputs = {"completions.jsonl", "completions_rejected.jsonl"};
    m.input_count = inputs.size() * pool.size();
    m.output_count = compliant.size();
    m.counts = {{"per_provider", per_provider}};
    return m;
}

StageManifest Pipeline::run_score() {
    StageManifest m;
    m.inputs = {"completions.jsonl", "inputs.jsonl", "qa_filtered.jsonl"};
    const auto completions = read_jsonl(require("completions.jsonl"));
    std::map<std::string, std::string> qa_of_input;
    for (const auto& in : read_inputs(require("inputs.jsonl"))) qa_of_input[in.input_id] = in.qa_id;
    const auto qas = qa_by_id(require("qa_filtered.jsonl"));
    const auto& judge = provider(cfg_.judge);
    auto& emb = embedder();

    std::vector<json> lines(completions.size());
    std::atomic<std::size_t> unscored{0};
    parallel_for(completions.size(), cfg_.workers, [&](std::size_t i) {
        const auto parsed = completion_from_json(completions[i]);
        const auto& qa = qas.at(qa_of_input.at(parsed.input_id));
        const auto mv = score_completion(qa.query, qa.answer, parsed, {*gateway_, judge, emb});
        if (!mv.complete()) ++unscored;
        lines[i] = json{{"input_id", parsed.input_id}, {"provider_id", parsed.provider_id}, {"metrics", to_json(mv)}};
    });
    write_jsonl(out("scores.jsonl"), lines);
    m.outputs = {"scores.jsonl"};
    m.input_count = m.output_count = lines.size();
    m.counts = {{"unscored", unscored.load()}, {"judge", cfg_.judge}, {"token_embedder", emb.model_identifier()}};
    return m;
}

StageManifest Pipeline::run_compose() {
    StageManifest m;
    m.inputs = {"scores.jsonl"};
    std::map<std::string, std::vector<ScoredCompletion>> by_input;
    std::size_t total = 0;
    for (const auto& j : read_jsonl(require("scores.jsonl"))) {
        by_input[j.at("input_id").get<std::string>()].push_back(
            {j.at("provider_id").get<std::string>(), metrics_from_json(j.at("metrics"))});
        ++total;
    }

    std::vector<FeedbackPair> all;
    std::size_t skipped = 0, inputs_with_pairs = 0;
    for (const auto& [input_id, completions] : by_input) {
        auto result = compose_pairs(input_id, completions, cfg_.composer);
        skipped += result.skipped.size();
        if (!result.pairs.empty()) ++inputs_with_pairs;
        all.insert(all.end(), result.pairs.begin(), result.pairs.end());
    }
    std::vector<json> lines;
    for (const auto& p : all) lines.push_back(pair_line(p));
    const auto pairs_name = pairs_file();
    write_jsonl(out(pairs_name), lines);

    std::vector<std::string> ids;
    for (const auto& g : generator_pool()) ids.push_back(g.provider_id);
    const auto shares = pool_distribution_report(all, ids);
    const auto rule = std::string(to_string(cfg_.composer.rule));
    std::string csv = "provider_id,chosen,rejected,chosen_pct,rejected_pct\n";
    json table = json::array();
    for (const auto& s : shares) {
        char line[256];
        std::snprintf(line, sizeof line, "%s,%zu,%zu,%.4f,%.4f\n", s.provider_id.c_str(), s.chosen, s.rejected,
                      s.chosen_pct, s.rejected_pct);
        csv += line;
        table.push_back(json{{"provider_id", s.provider_id},
                             {"chosen", s.chosen},
                             {"rejected", s.rejected},
                             {"chosen_pct", s.chosen_pct},
                             {"rejected_pct", s.rejected_pct}});
    }
    write_text(out("pool_distribution_" + rule + ".csv"), csv);
    write_json(out("pool_distribution_" + rule + ".json"), table);

    m.outputs = {pairs_name, "pool_distribution_" + rule + ".csv", "pool_distribution_" + rule + ".json"};
    m.input_count = total;
    m.output_count = total - skipped;
    if (skipped) m.drops["unscored"] = skipped;
    m.counts = {{"rule", rule},
                {"epsilon", cfg_.composer.epsilon},
                {"pairs", all.size()},
                {"inputs", by_input.size()},
                {"inputs_with_pairs", inputs_with_pairs},
                {"per_provider", table}};
    return m;
}

StageManifest Pipeline::run_emit() {
    StageManifest m;
    const auto pairs_name = pairs_file();
    m.inputs = {pairs_name, "scores.jsonl", "completions.jsonl", "inputs.jsonl", "qa_filtered.jsonl", "chunks.jsonl"};
    const auto pair_lines = read_jsonl(require(pairs_name));
    const auto scores = read_jsonl(require("scores.jsonl"));
    const auto completions = read_jsonl(require("completions.jsonl"));
    const auto inputs = read_inputs(require("inputs.jsonl"));
    const auto qas = qa_by_id(require("qa_filtered.jsonl"));
    const ChunkStore store(read_chunks(require("chunks.jsonl")));

    std::map<std::string, std::string> prompts;
    for (const auto& in : inputs) prompts[in.input_id] = ext2gen_prompt(qas.at(in.qa_id), in, store);

    CompletionTable table;
    for (const auto& j : completions) {
        const auto parsed = completion_from_json(j);
        table[{parsed.input_id, parsed.provider_id}] = CompletionEntry{prompts.at(parsed.input_id), render_completion(parsed), {}};
    }
    std::map<std::string, std::vector<ScoredCompletion>> by_input;
    for (const auto& j : scores) {
        const auto key = std::make_pair(j.at("input_id").get<std::string>(), j.at("provider_id").get<std::string>());
        auto mv = metrics_from_json(j.at("metrics"));
        table.at(key).metrics = mv;
        by_input[key.first].push_back({key.second, mv});
    }

    std::vector<FeedbackPair> pairs;
    for (auto j : pair_lines) {
        j["rule"] = to_string(cfg_.composer.rule);
        pairs.push_back(feedback_pair_from_json(j));
    }
    const auto dpo = emit_dpo_pairs(pairs, table, cfg_.composer.epsilon, out("dpo_pairs.jsonl"));
    const auto kto = emit_kto_binary(to_kto(pairs), table, out("kto_binary.jsonl"));

    std::vector<SftChoice> sft;
    for (const auto& [input_id, candidates] : by_input) {
        try {
            sft.push_back({input_id, select_sft_reference(candidates, cfg_.sft)});
        } catch (const ComposerError&) {
        }
    }
    const auto sft_records = emit_sft(sft, table, out("sft.jsonl"));

    std::size_t positives = 0;
    for (const auto& r : kto) positives += r.label == 1 ? 1 : 0;
    m.outputs = {"dpo_pairs.jsonl", "kto_binary.jsonl", "sft.jsonl"};
    m.input_count = pairs.size();
    m.output_count = dpo.size();
    m.counts = {{"dpo_pairs", dpo.size()},
                {"kto_examples", kto.size()},
                {"kto_desirable", positives},
                {"sft_records", sft_records.size()},
                {"sft_criterion", to_string(cfg_.sft)},
                {"rule", to_string(cfg_.composer.rule)}};
    return m;
}

StageManifest Pipeline::run_sweep_stage() {
    StageManifest m;
    m.inputs = {"chunks.jsonl"};
    if (cfg_.sweeps.empty()) throw ConfigError("no sweeps configured");
    const auto chunks = read_chunks(require("chunks.jsonl"));
    TestSetConfig tc;
    tc.per_source_count = cfg_.test_per_source;
    tc.k = cfg_.k;
    tc.seed = cfg_.seed;
    tc.workers = cfg_.workers;
    const auto test = build_test_set(chunks, *gateway_, provider(cfg_.writer), provider(cfg_.judge), tc);

    std::vector<json> qa_lines, input_lines;
    for (const auto& qa : test.instances) qa_lines.push_back(to_json(qa));
    for (const auto& in : test.inputs) input_lines.push_back(to_json(in));
    write_jsonl(out("test_set.jsonl"), qa_lines);
    write_jsonl(out("test_inputs.jsonl"), input_lines);
    m.outputs = {"test_set.jsonl", "test_inputs.jsonl"};

    std::vector<Chunk> test_chunks;
    for (const auto& c : chunks)
        if (c.split == Split::test) test_chunks.push_back(c);
    const ChunkStore store(test_chunks);
    std::size_t errors = 0;
    fs::create_directories(out("sweeps"));
    for (std::size_t i = 0; i < cfg_.sweeps.size(); ++i) {
        const auto& sc = cfg_.sweeps[i];
        const auto report = run_sweep(provider(sc.endpoint), test.instances, sc.spec,
                                      {*gateway_, provider(cfg_.judge), embedder(), store, cfg_.workers});
        const auto name = "sweeps/sweep_" + std::to_string(i) + "_" + std::string(to_string(sc.spec.axis)) + "_" +
                          sc.endpoint + ".json";
        write_json(out(name), to_json(report));
        m.outputs.push_back(name);
        m.input_count += report.results.size();
        for (const auto& r : report.results) errors += r.status == SlotStatus::error ? 1 : 0;
    }
    m.output_count = m.input_count - errors;
    if (errors) m.drops["error_slot"] = errors;
    m.counts = {{"test_instances", test.instances.size()}, {"sweeps", cfg_.sweeps.size()}};
    return m;
}

StageManifest Pipeline::run_report() {
    StageManifest m;
    const auto dir = require("sweeps");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".json") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw StageError("missing predecessor output: no sweep results in " + dir.string());

    std::vector<SweepReport> reports;
    for (const auto& f : files) {
        reports.push_back(sweep_report_from_json(read_json(f)));
        m.inputs.push_back("sweeps/" + f.filename().string());
    }
    const auto files_out = aggregate_report(reports, out("reports"));
    for (const auto& p : files_out.csv) m.outputs.push_back("reports/" + p.filename().string());
    m.outputs.push_back("reports/summary.json");
    m.input_count = m.output_count = reports.size();
    return m;
}

}  // namespace ragalign
