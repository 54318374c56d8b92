#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "ragalign/corpus.hpp"

namespace ragalign {

struct ScoredChunk {
    std::string chunk_id;
    double score = 0.0;
    std::size_t rank = 0;  // 1-based

    bool operator==(const ScoredChunk&) const = default;
};

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// BM25 inverted index over normalized chunk terms. Immutable after build.
class LexicalIndex {
public:
    struct Posting {
        std::size_t doc = 0;  // position in chunk_ids()
        std::size_t tf = 0;
    };

    static LexicalIndex build(const std::vector<Chunk>& chunks, Bm25Params params = {});

    std::size_t size() const noexcept { return chunk_ids_.size(); }
    double average_length() const noexcept { return avg_length_; }
    std::size_t document_frequency(const std::string& term) const;
    const std::vector<std::string>& chunk_ids() const noexcept { return chunk_ids_; }
    const std::map<std::string, std::vector<Posting>>& postings() const noexcept { return postings_; }
    const std::vector<std::size_t>& lengths() const noexcept { return lengths_; }
    const Bm25Params& params() const noexcept { return params_; }

    /// Top-k chunks by BM25; ties (including all-zero scores) by chunk_id.
    std::vector<ScoredChunk> retrieve_top_k(const std::string& query, std::size_t k) const;

    json to_json() const;
    static LexicalIndex from_json(const json& j);

private:
    Bm25Params params_;
    std::vector<std::string> chunk_ids_;
    std::vector<std::size_t> lengths_;
    double avg_length_ = 0.0;
    std::map<std::string, std::vector<Posting>> postings_;
};

/// Terms used by the lexical index: normalized whitespace tokens.
std::vector<std::string> index_terms(std::string_view text);

/// Sentence-level embedding backend for dense retrieval.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::string model_identifier() const = 0;
    /// One vector per input text, all of the same dimension.
    virtual std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) = 0;
};

/// Embeddings endpoint speaking {"model", "input": [...]} ->
/// {"data": [{"embedding": [...]}, ...]}.
class HttpEmbeddingProvider : public EmbeddingProvider {
public:
    HttpEmbeddingProvider(std::string endpoint, std::string model, std::string api_key = {},
                          int timeout_seconds = 60);
    std::string model_identifier() const override { return model_; }
    std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override;

private:
    std::string endpoint_;
    std::string model_;
    std::string api_key_;
    int timeout_seconds_;
};

/// Wraps a provider with an on-disk cache keyed by (model, sha256(text)).
class CachedEmbeddingProvider : public EmbeddingProvider {
public:
    CachedEmbeddingProvider(std::shared_ptr<EmbeddingProvider> inner, std::filesystem::path cache_dir);
    std::string model_identifier() const override { return inner_->model_identifier(); }
    std::vector<std::vector<float>> embed(const std::vector<std::string>& texts) override;

    std::size_t cache_hits() const noexcept { return hits_; }

private:
    std::filesystem::path entry_path(const std::string& text) const;

    std::shared_ptr<EmbeddingProvider> inner_;
    std::filesystem::path dir_;
    std::mutex mutex_;
    std::size_t hits_ = 0;
};

double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b);

/// Top-k chunks by cosine similarity between the query and chunk embeddings.
/// Provider failures surface as ProviderError.
std::vector<ScoredChunk> dense_retrieve_top_k(EmbeddingProvider& provider, const std::vector<Chunk>& chunks,
                                              const std::string& query, std::size_t k);

/// Retrieved chunks minus exact (whitespace-normalized) copies of the relevant
/// chunk, in retrieval order.
std::vector<Chunk> label_noisy_chunks(const std::vector<ScoredChunk>& retrieved, const Chunk& relevant,
                                      const ChunkStore& store);

}  // namespace ragalign
