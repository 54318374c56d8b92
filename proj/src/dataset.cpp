#include "ragalign/dataset.hpp"

#include <algorithm>
#include <random>

#include "ragalign/errors.hpp"
#include "ragalign/prompts.hpp"

namespace ragalign {

std::string_view to_string(QACategory category) {
    switch (category) {
        case QACategory::fact: return "fact";
        case QACategory::instruction: return "instruction";
        case QACategory::definition: return "definition";
        case QACategory::opinion: return "opinion";
        case QACategory::yes_no: return "yes_no";
        case QACategory::human_sourced: return "human_sourced";
        case QACategory::unlabeled: return "unlabeled";
    }
    return "unlabeled";
}

QACategory parse_category(std::string_view text) {
    const auto t = to_lower(trim(text));
    if (t == "fact" || t == "fact-based" || t == "fact_based") return QACategory::fact;
    if (t == "instruction" || t == "instruction-based" || t == "instruction_based") return QACategory::instruction;
    if (t == "definition" || t == "explanation" || t == "definition or explanation") return QACategory::definition;
    if (t == "opinion") return QACategory::opinion;
    if (t == "yes_no" || t == "yes/no" || t == "yes-no") return QACategory::yes_no;
    if (t == "human_sourced") return QACategory::human_sourced;
    return QACategory::unlabeled;
}

std::string_view to_string(QAStatus status) {
    switch (status) {
        case QAStatus::raw: return "raw";
        case QAStatus::filtered_ok: return "filtered_ok";
        case QAStatus::dropped: return "dropped";
    }
    return "raw";
}

QAStatus parse_status(std::string_view text) {
    if (text == "raw") return QAStatus::raw;
    if (text == "filtered_ok") return QAStatus::filtered_ok;
    if (text == "dropped") return QAStatus::dropped;
    throw ArgumentError("unknown QA status: " + std::string(text));
}

json to_json(const QAInstance& qa) {
    return json{{"qa_id", qa.qa_id},
                {"query", qa.query},
                {"answer", qa.answer},
                {"category", to_string(qa.category)},
                {"relevant_chunk_id", qa.relevant_chunk_id},
                {"noisy_chunk_ids", qa.noisy_chunk_ids},
                {"status", to_string(qa.status)}};
}

QAInstance qa_from_json(const json& j) {
    return QAInstance{j.at("qa_id").get<std::string>(),
                      j.at("query").get<std::string>(),
                      j.at("answer").get<std::string>(),
                      parse_category(j.value("category", std::string{"unlabeled"})),
                      j.at("relevant_chunk_id").get<std::string>(),
                      j.value("noisy_chunk_ids", std::vector<std::string>{}),
                      parse_status(j.value("status", std::string{"raw"}))};
}

json to_json(const NoisyInput& input) {
    return json{{"input_id", input.input_id},
                {"qa_id", input.qa_id},
                {"chunk_ids", input.chunk_ids},
                {"relevant_position", input.relevant_position},
                {"m", input.m},
                {"seed", input.seed}};
}

NoisyInput noisy_input_from_json(const json& j) {
    return NoisyInput{j.at("input_id").get<std::string>(),       j.at("qa_id").get<std::string>(),
                      j.at("chunk_ids").get<std::vector<std::string>>(), j.at("relevant_position").get<std::size_t>(),
                      j.at("m").get<std::size_t>(),                j.at("seed").get<std::uint64_t>()};
}

QAInstance generate_qa(const Chunk& chunk, Gateway& gateway, const ProviderSpec& writer) {
    if (trim(chunk.text).empty()) throw ArgumentError("cannot generate a QA pair from an empty chunk");
    const auto prompt = render_prompt(TemplateId::qa_gen, {{"target_chunk", chunk.text}});

    std::string last;
    for (std::uint32_t attempt = 0; attempt < kJudgeAttempts; ++attempt) {
        const auto completion = gateway.complete(writer, prompt, attempt);
        last = completion.text;
        const auto obj = parse_json_object(completion.text);
        if (!obj || !obj->contains("query") || !obj->contains("answer") || !(*obj)["query"].is_string() ||
            !(*obj)["answer"].is_string())
            continue;

        QAInstance qa;
        qa.qa_id = "qa:" + chunk.chunk_id;
        qa.query = trim((*obj)["query"].get<std::string>());
        qa.answer = trim((*obj)["answer"].get<std::string>());
        if (qa.query.empty() || qa.answer.empty())
            throw QAGenError(QAGenError::Kind::empty_field, "empty query or answer for " + chunk.chunk_id);
        if (auto it = obj->find("category"); it != obj->end() && it->is_string())
            qa.category = parse_category(it->get<std::string>());
        qa.relevant_chunk_id = chunk.chunk_id;
        qa.status = QAStatus::raw;
        return qa;
    }
    throw QAGenError(QAGenError::Kind::parse,
                     "no parseable QA JSON for " + chunk.chunk_id + " after " + std::to_string(kJudgeAttempts) +
                         " attempts: " + last.substr(0, 200));
}

std::vector<std::string> retrieve_noisy_ids(const QAInstance& qa, const LexicalIndex& index, const ChunkStore& store,
                                            std::size_t k) {
    const auto hits = index.retrieve_top_k(qa.query, k);
    std::vector<std::string> ids;
    for (const auto& c : label_noisy_chunks(hits, store.at(qa.relevant_chunk_id), store)) ids.push_back(c.chunk_id);
    return ids;
}

SupportVerdict check_support(std::string_view query, std::string_view answer, std::string_view chunk_text,
                             Gateway& gateway, const ProviderSpec& judge) {
    const auto prompt = render_prompt(TemplateId::validity_check, {{"query", std::string(query)},
                                                                   {"answer", std::string(answer)},
                                                                   {"target_chunk", std::string(chunk_text)}});
    std::string last;
    for (std::uint32_t attempt = 0; attempt < kJudgeAttempts; ++attempt) {
        const auto completion = gateway.complete(judge, prompt, attempt);
        last = completion.text;
        const auto obj = parse_json_object(completion.text);
        if (!obj) continue;
        auto it = obj->find("response");
        if (it == obj->end() || !it->is_string()) continue;
        return to_lower(trim(it->get<std::string>())) == "supported" ? SupportVerdict::supported
                                                                      : SupportVerdict::not_supported;
    }
    throw JudgeError("unparseable validity verdict from " + judge.provider_id + ": " + last.substr(0, 200));
}

FilterOutcome filter_instance(const QAInstance& qa, const ChunkStore& store, Gateway& gateway,
                              const ProviderSpec& judge, std::size_t workers) {
    if (qa.status != QAStatus::raw) throw ArgumentError("filter_instance expects a raw QA instance: " + qa.qa_id);

    FilterOutcome out{qa, {}, 0, false};
    const auto& relevant = store.at(qa.relevant_chunk_id);
    try {
        if (check_support(qa.query, qa.answer, relevant.text, gateway, judge) == SupportVerdict::not_supported) {
            out.qa.status = QAStatus::dropped;
            return out;
        }
    } catch (const JudgeError&) {
        out.relevant_judge_error = true;
        return out;
    }

    enum class Keep { yes, supported, error };
    std::vector<Keep> keep(qa.noisy_chunk_ids.size(), Keep::yes);
    parallel_for(qa.noisy_chunk_ids.size(), workers, [&](std::size_t i) {
        const auto* chunk = store.find(qa.noisy_chunk_ids[i]);
        if (!chunk) {
            keep[i] = Keep::error;
            return;
        }
        try {
            if (check_support(qa.query, qa.answer, chunk->text, gateway, judge) == SupportVerdict::supported)
                keep[i] = Keep::supported;
        } catch (const JudgeError&) {
            keep[i] = Keep::error;
        }
    });

    out.qa.noisy_chunk_ids.clear();
    for (std::size_t i = 0; i < keep.size(); ++i) {
        switch (keep[i]) {
            case Keep::yes: out.qa.noisy_chunk_ids.push_back(qa.noisy_chunk_ids[i]); break;
            case Keep::supported: out.removed_chunk_ids.push_back(qa.noisy_chunk_ids[i]); break;
            case Keep::error:
                ++out.noisy_judge_errors;
                out.removed_chunk_ids.push_back(qa.noisy_chunk_ids[i]);
                break;
        }
    }
    out.qa.status = QAStatus::filtered_ok;
    return out;
}

Consolidation consolidate_input(const QAInstance& qa, ConsolidateMode mode, const ConsolidateParams& params,
                                std::uint64_t global_seed) {
    if (qa.status != QAStatus::filtered_ok)
        throw ConsolidateError("only filtered_ok instances can be consolidated: " + qa.qa_id);

    Consolidation out;
    auto& input = out.input;
    input.qa_id = qa.qa_id;
    const std::string key = params.tag.empty() ? qa.qa_id : qa.qa_id + "|" + params.tag;
    input.input_id = params.tag.empty() ? qa.qa_id : qa.qa_id + "@" + params.tag;
    input.seed = derive_seed(global_seed, key);
    std::mt19937_64 rng(input.seed);

    std::vector<std::string> pool = qa.noisy_chunk_ids;
    if (mode == ConsolidateMode::train) {
        out.drawn_m = std::uniform_int_distribution<std::size_t>(0, params.max_noise)(rng);
        input.m = std::min(out.drawn_m, pool.size());
        out.capped = input.m < out.drawn_m;
        std::shuffle(pool.begin(), pool.end(), rng);
        input.chunk_ids.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(input.m));
        input.chunk_ids.push_back(qa.relevant_chunk_id);
        std::shuffle(input.chunk_ids.begin(), input.chunk_ids.end(), rng);
        input.relevant_position = static_cast<std::size_t>(
            std::find(input.chunk_ids.begin(), input.chunk_ids.end(), qa.relevant_chunk_id) - input.chunk_ids.begin());
        return out;
    }

    if (params.m > pool.size())
        throw ConsolidateError("insufficient_noise: " + qa.qa_id + " has " + std::to_string(pool.size()) +
                               " noisy chunks, sweep needs " + std::to_string(params.m));
    if (params.relevant_position > params.m)
        throw ConsolidateError("relevant_position " + std::to_string(params.relevant_position) +
                               " outside list of length " + std::to_string(params.m + 1));
    out.drawn_m = params.m;
    input.m = params.m;
    input.relevant_position = params.relevant_position;
    std::shuffle(pool.begin(), pool.end(), rng);
    input.chunk_ids.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(params.m));
    input.chunk_ids.insert(input.chunk_ids.begin() + static_cast<std::ptrdiff_t>(params.relevant_position),
                           qa.relevant_chunk_id);
    return out;
}

}  // namespace ragalign
