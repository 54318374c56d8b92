#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace ragalign {

using json = nlohmann::json;

/// Split on ASCII whitespace, dropping empty pieces.
std::vector<std::string> split_whitespace(std::string_view text);

/// Join tokens with single spaces.
std::string join(const std::vector<std::string>& tokens, std::string_view sep = " ");

/// Collapse whitespace runs to one space and trim both ends.
std::string collapse_whitespace(std::string_view text);

std::string trim(std::string_view text);

/// Lowercase, drop ASCII punctuation, collapse whitespace. Shared by
/// accuracy, ROUGE tokenization, extraction attribution and lexical indexing.
std::string normalize_answer(std::string_view text);

/// Tokens of normalize_answer(text).
std::vector<std::string> normalized_tokens(std::string_view text);

bool iequals_prefix(std::string_view text, std::string_view prefix);

std::string to_lower(std::string_view text);

/// Hex SHA-256 of the input bytes.
std::string sha256_hex(std::string_view data);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view data);

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Per-instance seed derived from the run seed and an instance key.
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view key);

/// Deterministic uniform double in [0,1) from a key.
double unit_hash(std::uint64_t seed, std::string_view key);

/// Drops everything before the first '{' and after the last '}' (code fences,
/// chatter) and parses once. Returns nullopt unless the result is an object.
std::optional<json> parse_json_object(std::string_view text);

// Line-delimited JSON helpers.
std::vector<json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& records);
json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& value);
void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

/// Runs fn(i) for i in [0, n) on up to `workers` threads. Exceptions from fn
/// are rethrown (first one wins) after all threads join.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

}  // namespace ragalign
