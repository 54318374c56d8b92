#include "ragalign/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <random>
#include <set>

#include "ragalign/errors.hpp"
#include "ragalign/prompts.hpp"

namespace ragalign {

ExtractionScores extraction_prf(const ParsedCompletion& parsed, const std::vector<std::string>& relevant_chunk_ids,
                                const std::vector<std::pair<std::string, std::string>>& chunks) {
    ExtractionScores out;
    if (parsed.sentences.empty()) return out;

    const std::set<std::string> relevant(relevant_chunk_ids.begin(), relevant_chunk_ids.end());
    std::vector<std::pair<std::string, std::string>> normalized;
    normalized.reserve(chunks.size());
    for (const auto& [id, text] : chunks) normalized.emplace_back(id, normalize_answer(text));

    std::size_t matched = 0;
    std::set<std::string> hit_relevant;
    for (const auto& sentence : parsed.sentences) {
        const auto s = normalize_answer(sentence);
        bool from_relevant = false, from_any = false;
        if (!s.empty()) {
            for (const auto& [id, text] : normalized) {
                if (text.find(s) == std::string::npos) continue;
                from_any = true;
                if (relevant.count(id)) {
                    from_relevant = true;
                    hit_relevant.insert(id);
                }
            }
        }
        if (from_relevant) ++matched;
        if (!from_any) ++out.unattributed;
    }
    out.precision = static_cast<double>(matched) / static_cast<double>(parsed.sentences.size());
    out.recall = relevant.empty() ? 0.0 : static_cast<double>(hit_relevant.size()) / static_cast<double>(relevant.size());
    if (out.precision + out.recall > 0.0) out.f1 = 2.0 * out.precision * out.recall / (out.precision + out.recall);
    return out;
}

TestSet build_test_set(const std::vector<Chunk>& chunks, Gateway& gateway, const ProviderSpec& writer,
                       const ProviderSpec& judge, const TestSetConfig& cfg) {
    if (cfg.per_source_count == 0) throw ArgumentError("per_source_count must be positive");
    std::set<std::string> sources;
    std::vector<Chunk> test_chunks;
    for (const auto& c : chunks) {
        sources.insert(c.source_tag);
        if (c.split == Split::test) test_chunks.push_back(c);
    }
    if (sources.empty()) throw BuildError("no chunks to build a test set from");

    std::map<std::string, std::vector<std::string>> by_source;
    for (const auto& c : test_chunks) by_source[c.source_tag].push_back(c.chunk_id);
    for (const auto& s : sources) {
        if (by_source[s].size() < cfg.per_source_count)
            throw BuildError("source " + s + " has " + std::to_string(by_source[s].size()) + " test chunks, need " +
                             std::to_string(cfg.per_source_count));
    }

    const ChunkStore store(test_chunks);
    const auto index = LexicalIndex::build(test_chunks);
    TestSet out;
    for (const auto& source : sources) {
        auto ids = by_source[source];
        std::sort(ids.begin(), ids.end());
        std::mt19937_64 rng(derive_seed(cfg.seed, "testset|" + source));
        std::shuffle(ids.begin(), ids.end(), rng);

        std::size_t kept = 0;
        for (const auto& id : ids) {
            if (kept == cfg.per_source_count) break;
            QAInstance qa;
            try {
                qa = generate_qa(store.at(id), gateway, writer);
            } catch (const QAGenError&) {
                continue;
            }
            qa.noisy_chunk_ids = retrieve_noisy_ids(qa, index, store, cfg.k);
            auto filtered = filter_instance(qa, store, gateway, judge, cfg.workers);
            if (filtered.qa.status != QAStatus::filtered_ok) continue;
            out.inputs.push_back(consolidate_input(filtered.qa, ConsolidateMode::train, {}, cfg.seed).input);
            out.instances.push_back(std::move(filtered.qa));
            ++kept;
        }
        if (kept < cfg.per_source_count)
            throw BuildError("source " + source + " yielded only " + std::to_string(kept) + " valid test instances");
    }
    return out;
}

std::string_view to_string(SweepAxis axis) { return axis == SweepAxis::position ? "position" : "noise"; }

SweepAxis parse_axis(std::string_view text) {
    if (text == "position") return SweepAxis::position;
    if (text == "noise") return SweepAxis::noise;
    throw ArgumentError("unknown sweep axis: " + std::string(text));
}

void SweepSpec::validate() const {
    if (values.empty()) throw ArgumentError("sweep needs at least one value");
    if (repetitions == 0) throw ArgumentError("repetitions must be positive");
    for (auto v : values) {
        if (axis == SweepAxis::position && v > fixed_m)
            throw ArgumentError("position " + std::to_string(v) + " outside [0, " + std::to_string(fixed_m) + "]");
        if (axis == SweepAxis::noise && v > kMaxNoise)
            throw ArgumentError("noise value " + std::to_string(v) + " above " + std::to_string(kMaxNoise));
    }
    if (axis == SweepAxis::position && fixed_m > kMaxNoise) throw ArgumentError("fixed_m above the noise limit");
}

namespace {

std::size_t word_count(std::string_view text) { return split_whitespace(text).size(); }

double mean(double sum, std::size_t n) { return n ? sum / static_cast<double>(n) : 0.0; }

}  // namespace

SweepReport run_sweep(const ProviderSpec& endpoint, const std::vector<QAInstance>& test_set, const SweepSpec& spec,
                      SweepContext ctx) {
    spec.validate();
    std::vector<const QAInstance*> instances;
    for (const auto& qa : test_set) instances.push_back(&qa);
    std::sort(instances.begin(), instances.end(),
              [](const QAInstance* a, const QAInstance* b) { return a->qa_id < b->qa_id; });

    struct Job {
        const QAInstance* qa = nullptr;
        NoisyInput input;
        std::string prompt;
        std::size_t result = 0;
    };
    std::vector<InstanceResult> results;
    std::vector<Job> jobs;
    for (auto value : spec.values) {
        for (std::size_t rep = 0; rep < spec.repetitions; ++rep) {
            const auto tag = std::string(to_string(spec.axis)) + "=" + std::to_string(value) + "#" + std::to_string(rep);
            for (const auto* qa : instances) {
                InstanceResult r;
                r.value = value;
                r.repetition = rep;
                r.input_id = qa->qa_id + "@" + tag;
                ConsolidateParams params;
                params.tag = tag;
                if (spec.axis == SweepAxis::position) {
                    params.m = spec.fixed_m;
                    params.relevant_position = value;
                } else {
                    params.m = value;
                    params.relevant_position = derive_seed(spec.seed, qa->qa_id + "|" + tag + "|position") % (value + 1);
                }
                try {
                    Job job;
                    job.qa = qa;
                    job.input = consolidate_input(*qa, ConsolidateMode::sweep, params, spec.seed).input;
                    std::vector<std::string> texts;
                    for (const auto& id : job.input.chunk_ids) texts.push_back(ctx.store.at(id).text);
                    job.prompt = render_prompt(TemplateId::ext2gen, {{"query", qa->query}, {"chunk_list", texts}});
                    job.result = results.size();
                    jobs.push_back(std::move(job));
                } catch (const ConsolidateError& e) {
                    r.error = e.what();
                } catch (const IndexError& e) {
                    r.error = e.what();
                }
                results.push_back(std::move(r));
            }
        }
    }

    std::vector<std::string> prompts;
    prompts.reserve(jobs.size());
    for (const auto& j : jobs) prompts.push_back(j.prompt);
    const auto slots = ctx.gateway.complete_batch(endpoint, prompts);

    parallel_for(jobs.size(), ctx.workers, [&](std::size_t k) {
        const auto& job = jobs[k];
        auto& r = results[job.result];
        if (!slots[k].ok()) {
            r.error = slots[k].error;
            return;
        }
        const auto& completion = *slots[k].completion;
        r.latency_s = static_cast<double>(completion.latency_ms) / 1000.0;
        auto parsed = parse_completion(completion.text);
        if (!parsed.compliant) {
            r.status = SlotStatus::noncompliant;
            r.metrics = make_metrics(0, 0, 0.0, 0.0);
            return;
        }
        try {
            r.metrics = score_completion(job.qa->query, job.qa->answer, parsed, {ctx.gateway, ctx.judge, ctx.embedder});
        } catch (const Error& e) {
            r.error = e.what();
            return;
        }
        if (!r.metrics.complete()) {
            r.error = "judge failed to score";
            return;
        }
        std::vector<std::pair<std::string, std::string>> chunk_texts;
        for (const auto& id : job.input.chunk_ids) chunk_texts.emplace_back(id, ctx.store.at(id).text);
        r.extraction = extraction_prf(parsed, {job.qa->relevant_chunk_id}, chunk_texts);
        r.sentence_count = parsed.sentences.size();
        for (const auto& s : parsed.sentences) r.sentence_words += word_count(s);
        r.answer_words = word_count(parsed.answer);
        r.status = SlotStatus::scored;
    });

    SweepReport report;
    report.axis = spec.axis;
    report.endpoint = endpoint.provider_id;
    report.repetitions = spec.repetitions;
    report.results = std::move(results);
    std::stable_sort(report.results.begin(), report.results.end(), [](const InstanceResult& a, const InstanceResult& b) {
        return std::tie(a.value, a.repetition, a.input_id) < std::tie(b.value, b.repetition, b.input_id);
    });
    return report;
}

std::vector<SweepPoint> SweepReport::points() const {
    std::map<std::size_t, std::vector<const InstanceResult*>> by_value;
    for (const auto& r : results) by_value[r.value].push_back(&r);

    std::vector<SweepPoint> out;
    for (const auto& [value, rs] : by_value) {
        SweepPoint p;
        p.value = value;
        p.attempted = rs.size();
        double acc = 0, llm = 0, rouge = 0, bert = 0, prec = 0, rec = 0, f1 = 0;
        double sentences = 0, sentence_words = 0, answer_words = 0, latency = 0;
        for (const auto* r : rs) {
            if (r->status == SlotStatus::error) {
                ++p.errors;
                continue;
            }
            (r->status == SlotStatus::scored ? p.scored : p.noncompliant)++;
            acc += *r->metrics.acc;
            llm += *r->metrics.llm_eval;
            rouge += *r->metrics.rouge_l;
            bert += *r->metrics.bert;
            prec += r->extraction.precision;
            rec += r->extraction.recall;
            f1 += r->extraction.f1;
            latency += r->latency_s;
            p.unattributed += r->extraction.unattributed;
            if (r->status == SlotStatus::scored) {
                sentences += static_cast<double>(r->sentence_count);
                sentence_words += static_cast<double>(r->sentence_words);
                answer_words += static_cast<double>(r->answer_words);
            }
        }
        const auto n = p.scored + p.noncompliant;
        p.acc = mean(acc, n);
        p.llm_eval = mean(llm, n);
        p.rouge_l = mean(rouge, n);
        p.bert = mean(bert, n);
        p.avg = (p.acc + p.llm_eval + p.rouge_l + p.bert) / 4.0;
        p.precision = mean(prec, n);
        p.recall = mean(rec, n);
        p.f1 = mean(f1, n);
        p.compliant_rate = mean(static_cast<double>(p.scored), n);
        p.mean_sentences = mean(sentences, p.scored);
        p.mean_sentence_words = mean(sentence_words, p.scored);
        p.mean_answer_words = mean(answer_words, p.scored);
        p.mean_latency_s = mean(latency, n);
        out.push_back(p);
    }
    return out;
}

bool SweepReport::full_coverage() const {
    return std::none_of(results.begin(), results.end(),
                        [](const InstanceResult& r) { return r.status == SlotStatus::error; });
}

namespace {

std::string_view to_string(SlotStatus s) {
    switch (s) {
        case SlotStatus::scored: return "scored";
        case SlotStatus::noncompliant: return "noncompliant";
        case SlotStatus::error: return "error";
    }
    return "error";
}

SlotStatus parse_slot_status(std::string_view text) {
    if (text == "scored") return SlotStatus::scored;
    if (text == "noncompliant") return SlotStatus::noncompliant;
    return SlotStatus::error;
}

}  // namespace

json to_json(const SweepReport& report) {
    json results = json::array();
    for (const auto& r : report.results) {
        results.push_back(json{{"value", r.value},
                               {"repetition", r.repetition},
                               {"input_id", r.input_id},
                               {"status", to_string(r.status)},
                               {"error", r.error},
                               {"metrics", to_json(r.metrics)},
                               {"precision", r.extraction.precision},
                               {"recall", r.extraction.recall},
                               {"f1", r.extraction.f1},
                               {"unattributed", r.extraction.unattributed},
                               {"sentence_count", r.sentence_count},
                               {"sentence_words", r.sentence_words},
                               {"answer_words", r.answer_words},
                               {"latency_s", r.latency_s}});
    }
    return json{{"axis", to_string(report.axis)},
                {"endpoint", report.endpoint},
                {"repetitions", report.repetitions},
                {"results", results}};
}

SweepReport sweep_report_from_json(const json& j) {
    SweepReport report;
    report.axis = parse_axis(j.at("axis").get<std::string>());
    report.endpoint = j.at("endpoint").get<std::string>();
    report.repetitions = j.at("repetitions").get<std::size_t>();
    for (const auto& x : j.at("results")) {
        InstanceResult r;
        r.value = x.at("value").get<std::size_t>();
        r.repetition = x.at("repetition").get<std::size_t>();
        r.input_id = x.at("input_id").get<std::string>();
        r.status = parse_slot_status(x.at("status").get<std::string>());
        r.error = x.value("error", std::string{});
        r.metrics = metrics_from_json(x.at("metrics"));
        r.extraction.precision = x.at("precision").get<double>();
        r.extraction.recall = x.at("recall").get<double>();
        r.extraction.f1 = x.at("f1").get<double>();
        r.extraction.unattributed = x.at("unattributed").get<std::size_t>();
        r.sentence_count = x.at("sentence_count").get<std::size_t>();
        r.sentence_words = x.at("sentence_words").get<std::size_t>();
        r.answer_words = x.at("answer_words").get<std::size_t>();
        r.latency_s = x.at("latency_s").get<double>();
        report.results.push_back(std::move(r));
    }
    return report;
}

ReportFiles aggregate_report(const std::vector<SweepReport>& reports, const std::filesystem::path& out_dir) {
    if (reports.empty()) throw ArgumentError("aggregate_report needs at least one report");

    std::map<SweepAxis, SweepReport> merged;
    std::map<SweepAxis, std::set<std::string>> endpoints;
    for (const auto& r : reports) {
        auto [it, fresh] = merged.try_emplace(r.axis, r);
        endpoints[r.axis].insert(r.endpoint);
        if (fresh) continue;
        it->second.repetitions += r.repetitions;
        it->second.results.insert(it->second.results.end(), r.results.begin(), r.results.end());
    }

    ReportFiles files;
    json summary = json::array();
    for (const auto& [axis, report] : merged) {
        const auto points = report.points();
        std::string csv = "value,acc,llm_eval,rouge_l,bert,avg,precision,recall,f1,compliant_rate\n";
        json rows = json::array();
        for (const auto& p : points) {
            char line[256];
            std::snprintf(line, sizeof line, "%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n", p.value, p.acc,
                          p.llm_eval, p.rouge_l, p.bert, p.avg, p.precision, p.recall, p.f1, p.compliant_rate);
            csv += line;
            rows.push_back(json{{"value", p.value},
                                {"attempted", p.attempted},
                                {"scored", p.scored},
                                {"noncompliant", p.noncompliant},
                                {"errors", p.errors},
                                {"unattributed_sentences", p.unattributed},
                                {"mean_sentences", p.mean_sentences},
                                {"mean_sentence_words", p.mean_sentence_words},
                                {"mean_answer_words", p.mean_answer_words},
                                {"mean_latency_s", p.mean_latency_s}});
        }
        const auto path = out_dir / ("sweep_" + std::string(to_string(axis)) + ".csv");
        write_text(path, csv);
        files.csv.push_back(path);
        summary.push_back(json{{"axis", to_string(axis)},
                               {"endpoints", endpoints[axis]},
                               {"repetitions", report.repetitions},
                               {"full_coverage", report.full_coverage()},
                               {"points", rows}});
    }
    files.summary = out_dir / "summary.json";
    write_json(files.summary, json{{"sweeps", summary}});
    return files;
}

}  // namespace ragalign
