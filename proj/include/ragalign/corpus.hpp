#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ragalign/text.hpp"

namespace ragalign {

enum class Split { train, test };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct Document {
    std::string doc_id;
    std::string text;
    std::string source_tag;
    Split split = Split::train;

    bool operator==(const Document&) const = default;
};

using DocumentSet = std::vector<Document>;

struct Chunk {
    std::string chunk_id;
    std::string doc_id;
    std::string text;
    std::size_t word_count = 0;
    std::string source_tag;
    Split split = Split::train;

    bool operator==(const Chunk&) const = default;
};

struct ChunkConfig {
    std::size_t window = 300;
    std::size_t overlap = 0;

    /// Throws ArgumentError unless window > 0 and overlap < window.
    void validate() const;
};

/// Reads one {"id","text","title"?} record per line. A title is prepended to
/// the text. Blank lines are skipped.
DocumentSet ingest_documents(const std::filesystem::path& path, std::string_view source_tag, Split split);

/// Sliding window over whitespace tokens; ids are "<doc_id>#<ordinal>".
std::vector<Chunk> chunk_document(const Document& doc, const ChunkConfig& cfg);

json to_json(const Document& doc);
Document document_from_json(const json& j);
json to_json(const Chunk& chunk);
Chunk chunk_from_json(const json& j);

void write_chunks(const std::filesystem::path& path, const std::vector<Chunk>& chunks);
std::vector<Chunk> read_chunks(const std::filesystem::path& path);

/// Id-addressable view over a chunk list.
class ChunkStore {
public:
    ChunkStore() = default;
    explicit ChunkStore(std::vector<Chunk> chunks);

    const Chunk& at(const std::string& chunk_id) const;
    const Chunk* find(const std::string& chunk_id) const;
    bool contains(const std::string& chunk_id) const { return find(chunk_id) != nullptr; }
    const std::vector<Chunk>& chunks() const noexcept { return chunks_; }
    std::size_t size() const noexcept { return chunks_.size(); }

private:
    std::vector<Chunk> chunks_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

}  // namespace ragalign
