#include "ragalign/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "ragalign/errors.hpp"
#include "ragalign/http.hpp"
#include "ragalign/prompts.hpp"

namespace ragalign {

double MetricVector::avg() const {
    if (!complete()) throw ComposerError("average of an incompletely scored metric vector");
    return (static_cast<double>(*acc) + static_cast<double>(*llm_eval) + *rouge_l + *bert) / 4.0;
}

MetricVector make_metrics(int acc, int llm_eval, double rouge_l, double bert) {
    return MetricVector{acc, llm_eval, rouge_l, bert};
}

json to_json(const MetricVector& mv) {
    auto field = [](const auto& opt) { return opt ? json(*opt) : json(nullptr); };
    return json{{"acc", field(mv.acc)}, {"llm_eval", field(mv.llm_eval)}, {"rouge_l", field(mv.rouge_l)},
                {"bert", field(mv.bert)}};
}

MetricVector metrics_from_json(const json& j) {
    MetricVector mv;
    if (j.contains("acc") && !j["acc"].is_null()) mv.acc = j["acc"].get<int>();
    if (j.contains("llm_eval") && !j["llm_eval"].is_null()) mv.llm_eval = j["llm_eval"].get<int>();
    if (j.contains("rouge_l") && !j["rouge_l"].is_null()) mv.rouge_l = j["rouge_l"].get<double>();
    if (j.contains("bert") && !j["bert"].is_null()) mv.bert = j["bert"].get<double>();
    return mv;
}

int accuracy(std::string_view true_answer, std::string_view predicted) {
    const auto truth = normalize_answer(true_answer);
    if (truth.empty()) return 0;
    return normalize_answer(predicted).find(truth) != std::string::npos ? 1 : 0;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l_f1_tokens(const std::vector<std::string>& reference, const std::vector<std::string>& candidate) {
    if (reference.empty() || candidate.empty()) return 0.0;
    const auto l = static_cast<double>(lcs_length(reference, candidate));
    if (l == 0.0) return 0.0;
    const double p = l / static_cast<double>(candidate.size());
    const double r = l / static_cast<double>(reference.size());
    return 2.0 * p * r / (p + r);
}

double rouge_l_f1(std::string_view reference, std::string_view candidate) {
    return rouge_l_f1_tokens(normalized_tokens(reference), normalized_tokens(candidate));
}

double bert_score_f1(const TokenEmbeddingSequence& ref, const TokenEmbeddingSequence& cand) {
    if (ref.vectors.empty() || cand.vectors.empty()) throw MetricError("BERTScore needs non-empty token sequences");
    if (ref.vectors.size() != ref.tokens.size() || cand.vectors.size() != cand.tokens.size())
        throw MetricError("token/vector count mismatch");

    auto sim = [](const std::vector<float>& a, const std::vector<float>& b) {
        if (a.size() != b.size()) throw MetricError("embedding dimension mismatch");
        double dot = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) dot += static_cast<double>(a[i]) * b[i];
        return std::clamp(dot, 0.0, 1.0);
    };

    // best_ref[i]: max similarity of ref token i to any cand token, and vice versa.
    std::vector<double> best_ref(ref.vectors.size(), 0.0), best_cand(cand.vectors.size(), 0.0);
    for (std::size_t i = 0; i < ref.vectors.size(); ++i) {
        for (std::size_t j = 0; j < cand.vectors.size(); ++j) {
            const double s = sim(ref.vectors[i], cand.vectors[j]);
            best_ref[i] = std::max(best_ref[i], s);
            best_cand[j] = std::max(best_cand[j], s);
        }
    }
    double r = 0.0, p = 0.0;
    for (double s : best_ref) r += s;
    for (double s : best_cand) p += s;
    r /= static_cast<double>(best_ref.size());
    p /= static_cast<double>(best_cand.size());
    if (p + r == 0.0) return 0.0;
    return std::clamp(2.0 * p * r / (p + r), 0.0, 1.0);
}

OneHotTokenEmbedder::OneHotTokenEmbedder(std::size_t dimension) : dimension_(dimension) {
    if (dimension_ == 0) throw ArgumentError("embedding dimension must be positive");
}

TokenEmbeddingSequence OneHotTokenEmbedder::embed_tokens(std::string_view text) {
    TokenEmbeddingSequence seq;
    seq.tokens = normalized_tokens(text);
    seq.vectors.reserve(seq.tokens.size());
    std::lock_guard lock(mutex_);
    for (const auto& token : seq.tokens) {
        auto [it, inserted] = vocab_.emplace(token, vocab_.size());
        if (it->second >= dimension_) {
            vocab_.erase(it);
            throw MetricError("one-hot vocabulary exceeds dimension " + std::to_string(dimension_));
        }
        std::vector<float> v(dimension_, 0.0f);
        v[it->second] = 1.0f;
        seq.vectors.push_back(std::move(v));
    }
    return seq;
}

std::size_t OneHotTokenEmbedder::vocabulary_size() const {
    std::lock_guard lock(mutex_);
    return vocab_.size();
}

HttpTokenEmbedder::HttpTokenEmbedder(std::string endpoint, std::string model, std::string api_key, int timeout_seconds)
    : endpoint_(std::move(endpoint)),
      model_(std::move(model)),
      api_key_(std::move(api_key)),
      timeout_seconds_(timeout_seconds) {}

TokenEmbeddingSequence HttpTokenEmbedder::embed_tokens(std::string_view text) {
    const json request{{"model", model_}, {"text", text}};
    const auto response = http::post_json(endpoint_, request.dump(), api_key_, timeout_seconds_);
    if (response.status == 0) throw ProviderError("token embedding transport failure: " + response.transport_error);
    if (response.status < 200 || response.status >= 300)
        throw ProviderError("token embedding endpoint returned " + std::to_string(response.status), response.status);
    TokenEmbeddingSequence seq;
    try {
        const auto body = json::parse(response.body);
        seq.tokens = body.at("tokens").get<std::vector<std::string>>();
        seq.vectors = body.at("vectors").get<std::vector<std::vector<float>>>();
    } catch (const json::exception& e) {
        throw ProviderError(std::string("malformed token embedding response: ") + e.what(), response.status);
    }
    if (seq.tokens.size() != seq.vectors.size()) throw ProviderError("token/vector count mismatch", response.status);
    for (auto& v : seq.vectors) {
        double norm = 0.0;
        for (float x : v) norm += static_cast<double>(x) * x;
        norm = std::sqrt(norm);
        if (norm > 0.0)
            for (auto& x : v) x = static_cast<float>(x / norm);
    }
    return seq;
}

int llm_eval(Gateway& gateway, const ProviderSpec& judge, std::string_view query, std::string_view true_answer,
             std::string_view predicted, std::size_t max_attempts) {
    const auto prompt = render_prompt(TemplateId::llm_eval, {{"query", std::string(query)},
                                                             {"true_answer", std::string(true_answer)},
                                                             {"predicted_answer", std::string(predicted)}});
    std::string last;
    for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
        const auto completion = gateway.complete(judge, prompt, static_cast<std::uint32_t>(attempt));
        last = completion.text;
        const auto obj = parse_json_object(completion.text);
        if (!obj) continue;
        auto it = obj->find("Correctness");
        if (it == obj->end()) continue;
        if (it->is_boolean()) return it->get<bool>() ? 1 : 0;
        if (!it->is_string()) continue;
        const auto verdict = to_lower(trim(it->get<std::string>()));
        if (verdict == "true") return 1;
        if (verdict == "false") return 0;
    }
    throw JudgeError("unparseable LLMEval verdict from " + judge.provider_id + ": " + last.substr(0, 200));
}

MetricVector score_completion(std::string_view query, std::string_view true_answer, const ParsedCompletion& parsed,
                              ScoringContext ctx) {
    if (!parsed.compliant) throw ArgumentError("only compliant completions are scored");
    const auto predicted = answer_for_metrics(parsed);
    MetricVector mv;
    mv.acc = accuracy(true_answer, predicted);
    mv.rouge_l = rouge_l_f1(true_answer, predicted);
    const auto ref = ctx.embedder.embed_tokens(true_answer);
    const auto cand = ctx.embedder.embed_tokens(predicted);
    mv.bert = (ref.vectors.empty() || cand.vectors.empty()) ? 0.0 : bert_score_f1(ref, cand);
    try {
        mv.llm_eval = llm_eval(ctx.gateway, ctx.judge, query, true_answer, predicted);
    } catch (const JudgeError&) {
    } catch (const ProviderError&) {
    }
    return mv;
}

}  // namespace ragalign
