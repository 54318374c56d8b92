#include "ragalign/corpus.hpp"

#include <fstream>
#include <unordered_set>

#include "ragalign/errors.hpp"

namespace ragalign {

std::string_view to_string(Split split) { return split == Split::train ? "train" : "test"; }

Split parse_split(std::string_view text) {
    if (text == "train") return Split::train;
    if (text == "test") return Split::test;
    throw ArgumentError("unknown split: " + std::string(text));
}

void ChunkConfig::validate() const {
    if (window == 0) throw ArgumentError("chunk window must be positive");
    if (overlap >= window) throw ArgumentError("chunk overlap must be smaller than the window");
}

DocumentSet ingest_documents(const std::filesystem::path& path, std::string_view source_tag, Split split) {
    std::ifstream in(path);
    if (!in) throw IngestError(IngestError::Kind::io, 0, "cannot open " + path.string());

    DocumentSet docs;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::exception& e) {
            throw IngestError(IngestError::Kind::parse, line_no,
                              path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (!record.is_object()) {
            throw IngestError(IngestError::Kind::parse, line_no,
                              path.string() + ":" + std::to_string(line_no) + ": record is not an object");
        }
        if (!record.contains("id") || record["id"].is_null()) {
            throw IngestError(IngestError::Kind::duplicate_id, line_no,
                              path.string() + ":" + std::to_string(line_no) + ": record has no id");
        }
        if (!record.contains("text") || !record["text"].is_string()) {
            throw IngestError(IngestError::Kind::parse, line_no,
                              path.string() + ":" + std::to_string(line_no) + ": record has no text");
        }
        const auto& id_field = record["id"];
        std::string id = id_field.is_string() ? id_field.get<std::string>() : id_field.dump();
        if (!seen.insert(id).second) {
            throw IngestError(IngestError::Kind::duplicate_id, line_no, "duplicate document id: " + id);
        }
        std::string text = record["text"].get<std::string>();
        if (auto it = record.find("title"); it != record.end() && it->is_string() && !it->get<std::string>().empty()) {
            text = it->get<std::string>() + "\n" + text;
        }
        docs.push_back(Document{std::move(id), std::move(text), std::string(source_tag), split});
    }
    return docs;
}

std::vector<Chunk> chunk_document(const Document& doc, const ChunkConfig& cfg) {
    cfg.validate();
    const auto words = split_whitespace(doc.text);
    if (words.empty()) throw ChunkError("document " + doc.doc_id + " has empty text");

    const std::size_t stride = cfg.window - cfg.overlap;
    std::vector<Chunk> chunks;
    // Windows start at every stride offset inside the document, so with overlap
    // the tail window can be a suffix of its predecessor.
    for (std::size_t start = 0; start < words.size(); start += stride) {
        const std::size_t end = std::min(start + cfg.window, words.size());
        std::vector<std::string> piece(words.begin() + static_cast<std::ptrdiff_t>(start),
                                       words.begin() + static_cast<std::ptrdiff_t>(end));
        chunks.push_back(Chunk{doc.doc_id + "#" + std::to_string(chunks.size()), doc.doc_id, join(piece),
                               piece.size(), doc.source_tag, doc.split});
    }
    return chunks;
}

json to_json(const Document& doc) {
    return json{{"id", doc.doc_id}, {"text", doc.text}, {"source_tag", doc.source_tag}, {"split", to_string(doc.split)}};
}

Document document_from_json(const json& j) {
    return Document{j.at("id").get<std::string>(), j.at("text").get<std::string>(),
                    j.value("source_tag", std::string{}), parse_split(j.value("split", std::string{"train"}))};
}

json to_json(const Chunk& chunk) {
    return json{{"chunk_id", chunk.chunk_id},     {"doc_id", chunk.doc_id},
                {"text", chunk.text},             {"word_count", chunk.word_count},
                {"source_tag", chunk.source_tag}, {"split", to_string(chunk.split)}};
}

Chunk chunk_from_json(const json& j) {
    return Chunk{j.at("chunk_id").get<std::string>(), j.at("doc_id").get<std::string>(),
                 j.at("text").get<std::string>(),     j.at("word_count").get<std::size_t>(),
                 j.value("source_tag", std::string{}), parse_split(j.value("split", std::string{"train"}))};
}

void write_chunks(const std::filesystem::path& path, const std::vector<Chunk>& chunks) {
    std::vector<json> records;
    records.reserve(chunks.size());
    for (const auto& c : chunks) records.push_back(to_json(c));
    write_jsonl(path, records);
}

std::vector<Chunk> read_chunks(const std::filesystem::path& path) {
    std::vector<Chunk> chunks;
    for (const auto& r : read_jsonl(path)) chunks.push_back(chunk_from_json(r));
    return chunks;
}

ChunkStore::ChunkStore(std::vector<Chunk> chunks) : chunks_(std::move(chunks)) {
    by_id_.reserve(chunks_.size());
    for (std::size_t i = 0; i < chunks_.size(); ++i) {
        if (!by_id_.emplace(chunks_[i].chunk_id, i).second)
            throw IndexError(IndexError::Kind::duplicate, "duplicate chunk id: " + chunks_[i].chunk_id);
    }
}

const Chunk* ChunkStore::find(const std::string& chunk_id) const {
    auto it = by_id_.find(chunk_id);
    return it == by_id_.end() ? nullptr : &chunks_[it->second];
}

const Chunk& ChunkStore::at(const std::string& chunk_id) const {
    if (const auto* c = find(chunk_id)) return *c;
    throw ArgumentError("unknown chunk id: " + chunk_id);
}

}  // namespace ragalign
