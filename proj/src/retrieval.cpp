#include "ragalign/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include "ragalign/errors.hpp"
#include "ragalign/http.hpp"

namespace ragalign {

namespace {

void rank_in_place(std::vector<ScoredChunk>& scored, std::size_t k) {
    std::sort(scored.begin(), scored.end(), [](const ScoredChunk& a, const ScoredChunk& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.chunk_id < b.chunk_id;
    });
    if (scored.size() > k) scored.resize(k);
    for (std::size_t i = 0; i < scored.size(); ++i) scored[i].rank = i + 1;
}

}  // namespace

std::vector<std::string> index_terms(std::string_view text) { return normalized_tokens(text); }

LexicalIndex LexicalIndex::build(const std::vector<Chunk>& chunks, Bm25Params params) {
    if (chunks.empty()) throw IndexError(IndexError::Kind::empty, "cannot index an empty chunk list");

    // Sort by id so that postings, and therefore scores, do not depend on input order.
    std::vector<const Chunk*> ordered;
    ordered.reserve(chunks.size());
    for (const auto& c : chunks) ordered.push_back(&c);
    std::sort(ordered.begin(), ordered.end(), [](const Chunk* a, const Chunk* b) { return a->chunk_id < b->chunk_id; });
    for (std::size_t i = 1; i < ordered.size(); ++i) {
        if (ordered[i]->chunk_id == ordered[i - 1]->chunk_id)
            throw IndexError(IndexError::Kind::duplicate, "duplicate chunk id: " + ordered[i]->chunk_id);
    }

    LexicalIndex index;
    index.params_ = params;
    std::size_t total = 0;
    for (std::size_t doc = 0; doc < ordered.size(); ++doc) {
        const auto terms = index_terms(ordered[doc]->text);
        index.chunk_ids_.push_back(ordered[doc]->chunk_id);
        index.lengths_.push_back(terms.size());
        total += terms.size();
        std::map<std::string, std::size_t> tf;
        for (const auto& t : terms) ++tf[t];
        for (const auto& [term, count] : tf) index.postings_[term].push_back(Posting{doc, count});
    }
    index.avg_length_ = static_cast<double>(total) / static_cast<double>(ordered.size());
    return index;
}

std::size_t LexicalIndex::document_frequency(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? 0 : it->second.size();
}

std::vector<ScoredChunk> LexicalIndex::retrieve_top_k(const std::string& query, std::size_t k) const {
    if (k == 0) throw ArgumentError("k must be positive");

    std::vector<double> scores(chunk_ids_.size(), 0.0);
    const auto q = index_terms(query);
    const std::set<std::string> unique_terms(q.begin(), q.end());
    const double n = static_cast<double>(chunk_ids_.size());
    for (const auto& term : unique_terms) {
        auto it = postings_.find(term);
        if (it == postings_.end()) continue;
        const double df = static_cast<double>(it->second.size());
        // Non-negative idf variant (Lucene).
        const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
        for (const auto& p : it->second) {
            const double tf = static_cast<double>(p.tf);
            const double norm =
                avg_length_ > 0.0 ? (1.0 - params_.b + params_.b * static_cast<double>(lengths_[p.doc]) / avg_length_)
                                  : 1.0;
            scores[p.doc] += idf * tf * (params_.k1 + 1.0) / (tf + params_.k1 * norm);
        }
    }

    std::vector<ScoredChunk> scored;
    scored.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) scored.push_back(ScoredChunk{chunk_ids_[i], scores[i], 0});
    rank_in_place(scored, k);
    return scored;
}

json LexicalIndex::to_json() const {
    json postings = json::object();
    for (const auto& [term, list] : postings_) {
        json arr = json::array();
        for (const auto& p : list) arr.push_back(json::array({p.doc, p.tf}));
        postings[term] = std::move(arr);
    }
    return json{{"k1", params_.k1},
                {"b", params_.b},
                {"chunk_ids", chunk_ids_},
                {"lengths", lengths_},
                {"avg_length", avg_length_},
                {"postings", std::move(postings)}};
}

LexicalIndex LexicalIndex::from_json(const json& j) {
    LexicalIndex index;
    index.params_ = Bm25Params{j.at("k1").get<double>(), j.at("b").get<double>()};
    index.chunk_ids_ = j.at("chunk_ids").get<std::vector<std::string>>();
    index.lengths_ = j.at("lengths").get<std::vector<std::size_t>>();
    index.avg_length_ = j.at("avg_length").get<double>();
    for (const auto& [term, arr] : j.at("postings").items()) {
        auto& list = index.postings_[term];
        for (const auto& p : arr) list.push_back(Posting{p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>()});
    }
    if (index.chunk_ids_.empty()) throw IndexError(IndexError::Kind::empty, "serialized index is empty");
    return index;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string endpoint, std::string model, std::string api_key,
                                             int timeout_seconds)
    : endpoint_(std::move(endpoint)),
      model_(std::move(model)),
      api_key_(std::move(api_key)),
      timeout_seconds_(timeout_seconds) {}

std::vector<std::vector<float>> HttpEmbeddingProvider::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) return {};
    const json request{{"model", model_}, {"input", texts}};
    const auto response = http::post_json(endpoint_, request.dump(), api_key_, timeout_seconds_);
    if (response.status == 0) throw ProviderError("embedding transport failure: " + response.transport_error);
    if (response.status < 200 || response.status >= 300)
        throw ProviderError("embedding endpoint returned " + std::to_string(response.status), response.status);

    std::vector<std::vector<float>> out;
    try {
        const auto body = json::parse(response.body);
        for (const auto& item : body.at("data")) out.push_back(item.at("embedding").get<std::vector<float>>());
    } catch (const json::exception& e) {
        throw ProviderError(std::string("malformed embedding response: ") + e.what(), response.status);
    }
    if (out.size() != texts.size()) throw ProviderError("embedding count mismatch", response.status);
    for (const auto& v : out) {
        if (v.size() != out.front().size()) throw ProviderError("embedding dimension mismatch", response.status);
    }
    return out;
}

CachedEmbeddingProvider::CachedEmbeddingProvider(std::shared_ptr<EmbeddingProvider> inner,
                                                 std::filesystem::path cache_dir)
    : inner_(std::move(inner)), dir_(std::move(cache_dir)) {}

std::filesystem::path CachedEmbeddingProvider::entry_path(const std::string& text) const {
    return dir_ / "embeddings" / sha256_hex(inner_->model_identifier()).substr(0, 16) / (sha256_hex(text) + ".json");
}

std::vector<std::vector<float>> CachedEmbeddingProvider::embed(const std::vector<std::string>& texts) {
    std::vector<std::vector<float>> out(texts.size());
    std::vector<std::size_t> missing;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        const auto path = entry_path(texts[i]);
        if (std::filesystem::exists(path)) {
            out[i] = read_json(path).at("vector").get<std::vector<float>>();
            std::lock_guard lock(mutex_);
            ++hits_;
        } else {
            missing.push_back(i);
        }
    }
    if (missing.empty()) return out;

    std::vector<std::string> batch;
    batch.reserve(missing.size());
    for (auto i : missing) batch.push_back(texts[i]);
    auto fresh = inner_->embed(batch);
    if (fresh.size() != batch.size()) throw ProviderError("embedding count mismatch");
    for (std::size_t j = 0; j < missing.size(); ++j) {
        write_json(entry_path(texts[missing[j]]), json{{"model", inner_->model_identifier()}, {"vector", fresh[j]}});
        out[missing[j]] = std::move(fresh[j]);
    }
    return out;
}

double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) throw ArgumentError("vector dimension mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<ScoredChunk> dense_retrieve_top_k(EmbeddingProvider& provider, const std::vector<Chunk>& chunks,
                                              const std::string& query, std::size_t k) {
    if (k == 0) throw ArgumentError("k must be positive");
    if (chunks.empty()) return {};
    std::vector<std::string> texts;
    texts.reserve(chunks.size() + 1);
    texts.push_back(query);
    for (const auto& c : chunks) texts.push_back(c.text);
    const auto vectors = provider.embed(texts);
    if (vectors.size() != texts.size()) throw ProviderError("embedding count mismatch");

    std::vector<ScoredChunk> scored;
    scored.reserve(chunks.size());
    for (std::size_t i = 0; i < chunks.size(); ++i)
        scored.push_back(ScoredChunk{chunks[i].chunk_id, cosine_similarity(vectors[0], vectors[i + 1]), 0});
    rank_in_place(scored, k);
    return scored;
}

std::vector<Chunk> label_noisy_chunks(const std::vector<ScoredChunk>& retrieved, const Chunk& relevant,
                                      const ChunkStore& store) {
    const auto relevant_text = collapse_whitespace(relevant.text);
    std::vector<Chunk> noisy;
    for (const auto& r : retrieved) {
        const auto* chunk = store.find(r.chunk_id);
        if (!chunk || chunk->chunk_id == relevant.chunk_id) continue;
        if (collapse_whitespace(chunk->text) == relevant_text) continue;
        noisy.push_back(*chunk);
    }
    return noisy;
}

}  // namespace ragalign
