#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ragalign/text.hpp"

namespace ragalign {

enum class ProviderRole { generator, judge, filter, qa_writer };

std::string_view to_string(ProviderRole role);
ProviderRole parse_role(std::string_view text);

struct ProviderSpec {
    std::string provider_id;
    std::string endpoint;  // full chat-completions URL
    std::string model_identifier;
    std::size_t max_in_flight = 4;
    double temperature = 0.0;
    std::size_t max_output_tokens = 1024;
    ProviderRole role = ProviderRole::generator;
    /// Environment variable holding the API key; empty means
    /// RAGALIGN_API_KEY_<PROVIDER_ID>.
    std::string api_key_env;
    /// Scripted behaviour used when the pool runs in mock mode.
    json mock = json::object();

    std::string resolved_api_key_env() const;
};

/// 0.0 for judge/filter/qa_writer roles, 0.7 for generators.
double default_temperature(ProviderRole role);

ProviderSpec provider_from_json(const json& j);
json to_json(const ProviderSpec& spec);

/// Parses a pool and rejects duplicate provider ids.
std::vector<ProviderSpec> parse_pool(const json& providers);

enum class FinishReason { stop, length, other };
std::string_view to_string(FinishReason reason);
FinishReason parse_finish_reason(std::string_view text);

struct RawCompletion {
    std::string provider_id;
    std::string request_hash;
    std::string text;
    std::int64_t latency_ms = 0;
    FinishReason finish_reason = FinishReason::stop;
    bool from_cache = false;
};

struct ChatRequest {
    std::string provider_id;
    std::string model_identifier;
    std::string prompt;
    double temperature = 0.0;
    std::size_t max_output_tokens = 0;
    std::string request_hash;
};

struct BackendReply {
    int status = 200;  // 0 for transport failure
    std::string text;
    FinishReason finish_reason = FinishReason::stop;
    std::string error;
};

/// Transport to one chat-completion provider.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual BackendReply send(const ChatRequest& request) = 0;
};

/// OpenAI-style chat-completions endpoint: POST {"model", "messages",
/// "temperature", "max_tokens"} and read choices[0].message.content.
class HttpChatBackend : public ChatBackend {
public:
    HttpChatBackend(std::string endpoint, std::string api_key, int timeout_seconds = 120);
    BackendReply send(const ChatRequest& request) override;

private:
    std::string endpoint_;
    std::string api_key_;
    int timeout_seconds_;
};

struct RetryPolicy {
    std::size_t max_attempts = 3;
    std::chrono::milliseconds base_backoff{250};
    double backoff_multiplier = 2.0;
};

/// One slot of a batch: either a completion or an error message.
struct BatchSlot {
    std::optional<RawCompletion> completion;
    std::string error;
    int status = 0;

    bool ok() const noexcept { return completion.has_value(); }
};

/// Uniform access to a provider pool. Thread-safe.
class Gateway {
public:
    explicit Gateway(std::filesystem::path cache_dir, RetryPolicy retry = {});
    ~Gateway();
    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    void register_provider(const ProviderSpec& spec, std::shared_ptr<ChatBackend> backend);
    bool has_provider(const std::string& provider_id) const;
    const ProviderSpec& provider(const std::string& provider_id) const;
    std::vector<ProviderSpec> providers() const;

    /// Cached completion. `salt` distinguishes deliberate re-asks of the same
    /// prompt (parse retries) so they get their own cache entries.
    RawCompletion complete(const ProviderSpec& spec, const std::string& prompt, std::uint32_t salt = 0);

    /// Results are in input order; at most spec.max_in_flight requests are
    /// outstanding at once. Per-item failures land in their slot.
    std::vector<BatchSlot> complete_batch(const ProviderSpec& spec, const std::vector<std::string>& prompts,
                                          std::uint32_t salt = 0);

    /// Backend calls actually issued (cache hits excluded).
    std::size_t network_calls(const std::string& provider_id) const;
    std::size_t cache_hits(const std::string& provider_id) const;

    static std::string request_hash(const ProviderSpec& spec, std::string_view prompt, std::uint32_t salt = 0);
    std::filesystem::path cache_path(const std::string& provider_id, const std::string& request_hash) const;

private:
    struct Slot;
    Slot& slot(const std::string& provider_id) const;
    void sleep_backoff(std::size_t attempt) const;

    std::filesystem::path cache_dir_;
    RetryPolicy retry_;
    mutable std::mutex mutex_;
    std::map<std::string, std::unique_ptr<Slot>> slots_;
};

}  // namespace ragalign
