#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <string>

#include "ragalign/corpus.hpp"
#include "ragalign/gateway.hpp"
#include "ragalign/mock.hpp"

namespace testing_support {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = fs::temp_directory_path() /
                ("ragalign_test_" + std::to_string(rd()) + "_" + std::to_string(counter++));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << content;
}

inline ragalign::RetryPolicy fast_retry() {
    ragalign::RetryPolicy p;
    p.base_backoff = std::chrono::milliseconds(1);
    return p;
}

inline ragalign::ProviderSpec spec(const std::string& id, ragalign::ProviderRole role = ragalign::ProviderRole::generator,
                                   std::size_t max_in_flight = 4) {
    ragalign::ProviderSpec s;
    s.provider_id = id;
    s.endpoint = "http://127.0.0.1:1/v1/chat/completions";
    s.model_identifier = id + "-model";
    s.role = role;
    s.max_in_flight = max_in_flight;
    s.temperature = ragalign::default_temperature(role);
    return s;
}

inline std::shared_ptr<ragalign::mock::ScriptedBackend> scripted(const ragalign::json& script,
                                                                 std::uint64_t seed = 0) {
    return std::make_shared<ragalign::mock::ScriptedBackend>(ragalign::mock::Script::from_json(script), seed);
}

inline std::string source_dir() { return RAGALIGN_SOURCE_DIR; }

inline fs::path fixture_dir() { return fs::path(source_dir()) / "data" / "fixture"; }

/// Every fixture document chunked the way the bundled config does it.
inline std::vector<ragalign::Chunk> fixture_chunks() {
    std::vector<ragalign::Chunk> out;
    for (const char* source : {"almanac", "chronicle", "handbook", "gazette", "registry"}) {
        for (auto split : {ragalign::Split::train, ragalign::Split::test}) {
            const auto file = fixture_dir() / (std::string(source) + "_" + std::string(ragalign::to_string(split)) + ".jsonl");
            for (const auto& doc : ragalign::ingest_documents(file, source, split)) {
                auto chunks = ragalign::chunk_document(doc, {50, 0});
                out.insert(out.end(), chunks.begin(), chunks.end());
            }
        }
    }
    return out;
}

}  // namespace testing_support
