#include "ragalign/composer.hpp"

#include <algorithm>
#include <set>

#include "ragalign/errors.hpp"

namespace ragalign {

namespace {

void require_unique_refs(const std::vector<ScoredCompletion>& completions) {
    std::set<std::string> seen;
    for (const auto& c : completions) {
        if (!seen.insert(c.ref).second) throw ComposerError("duplicate completion ref: " + c.ref);
    }
}

double similarity(const MetricVector& mv) { return *mv.rouge_l + *mv.bert; }

void sort_pairs(std::vector<FeedbackPair>& pairs) {
    std::sort(pairs.begin(), pairs.end(), [](const FeedbackPair& a, const FeedbackPair& b) {
        return std::tie(a.input_id, a.chosen, a.rejected) < std::tie(b.input_id, b.chosen, b.rejected);
    });
}

const CompletionEntry& lookup(const CompletionTable& table, const std::string& input_id, const std::string& ref,
                              std::size_t index) {
    auto it = table.find({input_id, ref});
    if (it == table.end()) throw EmitError(index, "no completion " + ref + " for input " + input_id);
    return it->second;
}

void require_text(std::size_t index, std::initializer_list<const std::string*> fields) {
    for (const auto* f : fields) {
        if (f->empty()) throw EmitError(index, "empty field");
    }
}

}  // namespace

std::string_view to_string(Rule rule) { return rule == Rule::R1 ? "R1" : "R2"; }

Rule parse_rule(std::string_view text) {
    if (text == "R1" || text == "r1") return Rule::R1;
    if (text == "R2" || text == "r2") return Rule::R2;
    throw ArgumentError("unknown rule: " + std::string(text));
}

void ComposerConfig::validate() const {
    if (!(epsilon >= 0.0)) throw ArgumentError("epsilon must be non-negative");
    if (max_pairs_per_input && *max_pairs_per_input == 0) throw ArgumentError("max_pairs_per_input must be positive");
}

json to_json(const FeedbackPair& pair) {
    return json{{"input_id", pair.input_id},
                {"chosen", pair.chosen},
                {"rejected", pair.rejected},
                {"rule", to_string(pair.rule)},
                {"inclusion_gap", pair.inclusion_gap},
                {"similarity_gap", pair.similarity_gap ? json(*pair.similarity_gap) : json(nullptr)}};
}

FeedbackPair feedback_pair_from_json(const json& j) {
    FeedbackPair p;
    p.input_id = j.at("input_id").get<std::string>();
    p.chosen = j.at("chosen").get<std::string>();
    p.rejected = j.at("rejected").get<std::string>();
    p.rule = parse_rule(j.at("rule").get<std::string>());
    p.inclusion_gap = j.at("inclusion_gap").get<int>();
    if (j.contains("similarity_gap") && !j["similarity_gap"].is_null()) p.similarity_gap = j["similarity_gap"].get<double>();
    return p;
}

json to_json(const BinaryExample& example) {
    return json{{"input_id", example.input_id}, {"completion", example.completion}, {"label", example.label}};
}

BinaryExample binary_example_from_json(const json& j) {
    return BinaryExample{j.at("input_id").get<std::string>(), j.at("completion").get<std::string>(),
                         j.at("label").get<int>()};
}

int inclusion_sum(const MetricVector& mv) {
    if (!mv.acc || !mv.llm_eval) throw ComposerError("unscored: inclusion metrics missing");
    return *mv.acc + *mv.llm_eval;
}

bool is_chosen(const MetricVector& mv) { return inclusion_sum(mv) >= 1; }

bool rule1_prefers(const MetricVector& i, const MetricVector& j) {
    return is_chosen(i) && inclusion_sum(i) > inclusion_sum(j);
}

bool rule2_tie_prefers(const MetricVector& i, const MetricVector& j, double epsilon) {
    if (!i.complete() || !j.complete()) throw ComposerError("unscored: rule 2 needs all four metrics");
    return is_chosen(i) && *i.acc == *j.acc && *i.llm_eval == *j.llm_eval && similarity(i) > similarity(j) + epsilon;
}

bool pair_satisfies(Rule rule, const MetricVector& chosen, const MetricVector& rejected, double epsilon) {
    if (rule1_prefers(chosen, rejected)) return true;
    return rule == Rule::R2 && rule2_tie_prefers(chosen, rejected, epsilon);
}

std::vector<FeedbackPair> compose_pairs_rule1(std::string_view input_id, const std::vector<ScoredCompletion>& completions) {
    require_unique_refs(completions);
    for (const auto& c : completions) inclusion_sum(c.metrics);

    std::vector<FeedbackPair> pairs;
    for (const auto& i : completions) {
        if (!is_chosen(i.metrics)) continue;
        for (const auto& j : completions) {
            if (&i == &j || !rule1_prefers(i.metrics, j.metrics)) continue;
            pairs.push_back({std::string(input_id), i.ref, j.ref, Rule::R1,
                             inclusion_sum(i.metrics) - inclusion_sum(j.metrics), std::nullopt});
        }
    }
    sort_pairs(pairs);
    return pairs;
}

std::vector<FeedbackPair> compose_pairs_rule2(std::string_view input_id, const std::vector<ScoredCompletion>& completions,
                                              const ComposerConfig& cfg) {
    cfg.validate();
    require_unique_refs(completions);
    for (const auto& c : completions) {
        if (!c.metrics.complete()) throw ComposerError("unscored: " + c.ref);
    }

    std::vector<FeedbackPair> pairs;
    for (const auto& i : completions) {
        if (!is_chosen(i.metrics)) continue;
        for (const auto& j : completions) {
            if (&i == &j) continue;
            if (rule1_prefers(i.metrics, j.metrics)) {
                pairs.push_back({std::string(input_id), i.ref, j.ref, Rule::R2,
                                 inclusion_sum(i.metrics) - inclusion_sum(j.metrics), std::nullopt});
            } else if (rule2_tie_prefers(i.metrics, j.metrics, cfg.epsilon)) {
                pairs.push_back({std::string(input_id), i.ref, j.ref, Rule::R2, 0,
                                 similarity(i.metrics) - similarity(j.metrics)});
            }
        }
    }
    sort_pairs(pairs);
    return pairs;
}

ComposeResult compose_pairs(std::string_view input_id, const std::vector<ScoredCompletion>& completions,
                            const ComposerConfig& cfg) {
    cfg.validate();
    ComposeResult out;
    std::vector<ScoredCompletion> usable;
    for (const auto& c : completions) {
        if (c.metrics.complete())
            usable.push_back(c);
        else
            out.skipped.push_back(c.ref);
    }
    out.pairs = cfg.rule == Rule::R1 ? compose_pairs_rule1(input_id, usable) : compose_pairs_rule2(input_id, usable, cfg);

    if (cfg.max_pairs_per_input && out.pairs.size() > *cfg.max_pairs_per_input) {
        std::stable_sort(out.pairs.begin(), out.pairs.end(), [](const FeedbackPair& a, const FeedbackPair& b) {
            if (a.inclusion_gap != b.inclusion_gap) return a.inclusion_gap > b.inclusion_gap;
            return a.similarity_gap.value_or(0.0) > b.similarity_gap.value_or(0.0);
        });
        out.pairs.resize(*cfg.max_pairs_per_input);
        sort_pairs(out.pairs);
    }
    return out;
}

std::vector<BinaryExample> to_kto(const std::vector<FeedbackPair>& pairs) {
    std::map<std::pair<std::string, std::string>, int> labels;
    for (const auto& p : pairs) {
        labels[{p.input_id, p.chosen}] = 1;
        labels.try_emplace({p.input_id, p.rejected}, 0);
    }
    std::vector<BinaryExample> out;
    out.reserve(labels.size());
    for (const auto& [key, label] : labels) out.push_back({key.first, key.second, label});
    return out;
}

std::string_view to_string(SftCriterion c) {
    switch (c) {
        case SftCriterion::best_avg: return "best_avg";
        case SftCriterion::acc: return "acc";
        case SftCriterion::llm_eval: return "llm_eval";
        case SftCriterion::rouge: return "rouge";
        case SftCriterion::bert: return "bert";
    }
    return "best_avg";
}

SftCriterion parse_sft_criterion(std::string_view text) {
    for (auto c : {SftCriterion::best_avg, SftCriterion::acc, SftCriterion::llm_eval, SftCriterion::rouge,
                   SftCriterion::bert}) {
        if (to_string(c) == text) return c;
    }
    throw ArgumentError("unknown SFT criterion: " + std::string(text));
}

std::string select_sft_reference(const std::vector<ScoredCompletion>& completions, SftCriterion criterion) {
    auto key = [criterion](const MetricVector& mv) -> double {
        switch (criterion) {
            case SftCriterion::best_avg: return mv.avg();
            case SftCriterion::acc: return *mv.acc;
            case SftCriterion::llm_eval: return *mv.llm_eval;
            case SftCriterion::rouge: return *mv.rouge_l;
            case SftCriterion::bert: return *mv.bert;
        }
        return 0.0;
    };
    const ScoredCompletion* best = nullptr;
    for (const auto& c : completions) {
        if (!c.metrics.complete()) continue;
        if (!best) {
            best = &c;
            continue;
        }
        const double k = key(c.metrics), bk = key(best->metrics);
        if (k != bk) {
            if (k > bk) best = &c;
            continue;
        }
        const double a = c.metrics.avg(), ba = best->metrics.avg();
        if (a > ba || (a == ba && c.ref < best->ref)) best = &c;
    }
    if (!best) throw ComposerError("empty: no scored completion to select from");
    return best->ref;
}

std::vector<DpoRecord> emit_dpo_pairs(const std::vector<FeedbackPair>& pairs, const CompletionTable& table,
                                      double epsilon, const std::filesystem::path& out) {
    std::vector<DpoRecord> records;
    std::vector<json> lines;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const auto& p = pairs[k];
        if (p.chosen == p.rejected) throw EmitError(k, "chosen equals rejected");
        const auto& chosen = lookup(table, p.input_id, p.chosen, k);
        const auto& rejected = lookup(table, p.input_id, p.rejected, k);
        try {
            if (!is_chosen(chosen.metrics)) throw EmitError(k, "chosen completion has no inclusion signal");
            if (!pair_satisfies(p.rule, chosen.metrics, rejected.metrics, epsilon))
                throw EmitError(k, "pair violates " + std::string(to_string(p.rule)));
        } catch (const ComposerError& e) {
            throw EmitError(k, e.what());
        }
        DpoRecord r{chosen.prompt, chosen.text, rejected.text};
        require_text(k, {&r.prompt, &r.chosen, &r.rejected});
        lines.push_back(json{{"prompt", r.prompt}, {"chosen", r.chosen}, {"rejected", r.rejected}});
        records.push_back(std::move(r));
    }
    write_jsonl(out, lines);
    return records;
}

std::vector<KtoRecord> emit_kto_binary(const std::vector<BinaryExample>& examples, const CompletionTable& table,
                                       const std::filesystem::path& out) {
    std::vector<KtoRecord> records;
    std::vector<json> lines;
    std::set<std::pair<std::string, std::string>> seen;
    for (std::size_t k = 0; k < examples.size(); ++k) {
        const auto& e = examples[k];
        if (e.label != 0 && e.label != 1) throw EmitError(k, "label must be 0 or 1");
        if (!seen.insert({e.input_id, e.completion}).second) throw EmitError(k, "duplicate binary example");
        const auto& entry = lookup(table, e.input_id, e.completion, k);
        KtoRecord r{entry.prompt, entry.text, e.label};
        require_text(k, {&r.prompt, &r.completion});
        lines.push_back(json{{"prompt", r.prompt}, {"completion", r.completion}, {"label", r.label}});
        records.push_back(std::move(r));
    }
    write_jsonl(out, lines);
    return records;
}

std::vector<SftRecord> emit_sft(const std::vector<SftChoice>& choices, const CompletionTable& table,
                                const std::filesystem::path& out) {
    std::vector<SftRecord> records;
    std::vector<json> lines;
    for (std::size_t k = 0; k < choices.size(); ++k) {
        const auto& entry = lookup(table, choices[k].input_id, choices[k].ref, k);
        SftRecord r{entry.prompt, entry.text};
        require_text(k, {&r.prompt, &r.completion});
        lines.push_back(json{{"prompt", r.prompt}, {"completion", r.completion}});
        records.push_back(std::move(r));
    }
    write_jsonl(out, lines);
    return records;
}

std::vector<DpoRecord> read_dpo_pairs(const std::filesystem::path& path) {
    std::vector<DpoRecord> out;
    for (const auto& j : read_jsonl(path))
        out.push_back({j.at("prompt").get<std::string>(), j.at("chosen").get<std::string>(),
                       j.at("rejected").get<std::string>()});
    return out;
}

std::vector<KtoRecord> read_kto_binary(const std::filesystem::path& path) {
    std::vector<KtoRecord> out;
    for (const auto& j : read_jsonl(path))
        out.push_back({j.at("prompt").get<std::string>(), j.at("completion").get<std::string>(), j.at("label").get<int>()});
    return out;
}

std::vector<SftRecord> read_sft(const std::filesystem::path& path) {
    std::vector<SftRecord> out;
    for (const auto& j : read_jsonl(path))
        out.push_back({j.at("prompt").get<std::string>(), j.at("completion").get<std::string>()});
    return out;
}

std::vector<PoolShare> pool_distribution_report(const std::vector<FeedbackPair>& pairs,
                                                const std::vector<std::string>& provider_ids) {
    if (pairs.empty()) return {};
    std::map<std::string, PoolShare> by_id;
    for (const auto& id : provider_ids) by_id[id].provider_id = id;
    for (const auto& p : pairs) {
        auto& c = by_id[p.chosen];
        c.provider_id = p.chosen;
        ++c.chosen;
        auto& r = by_id[p.rejected];
        r.provider_id = p.rejected;
        ++r.rejected;
    }
    const auto total = static_cast<double>(pairs.size());
    std::vector<PoolShare> out;
    auto emit = [&](const std::string& id) {
        auto share = by_id.at(id);
        share.chosen_pct = 100.0 * static_cast<double>(share.chosen) / total;
        share.rejected_pct = 100.0 * static_cast<double>(share.rejected) / total;
        out.push_back(share);
        by_id.erase(id);
    };
    for (const auto& id : provider_ids) {
        if (by_id.count(id)) emit(id);
    }
    while (!by_id.empty()) emit(by_id.begin()->first);
    return out;
}

}  // namespace ragalign
