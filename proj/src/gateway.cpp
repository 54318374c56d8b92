#include "ragalign/gateway.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>
#include <thread>

#include "ragalign/errors.hpp"
#include "ragalign/http.hpp"

namespace ragalign {

std::string_view to_string(ProviderRole role) {
    switch (role) {
        case ProviderRole::generator: return "generator";
        case ProviderRole::judge: return "judge";
        case ProviderRole::filter: return "filter";
        case ProviderRole::qa_writer: return "qa_writer";
    }
    return "generator";
}

ProviderRole parse_role(std::string_view text) {
    if (text == "generator") return ProviderRole::generator;
    if (text == "judge") return ProviderRole::judge;
    if (text == "filter") return ProviderRole::filter;
    if (text == "qa_writer") return ProviderRole::qa_writer;
    throw ConfigError("unknown provider role: " + std::string(text));
}

double default_temperature(ProviderRole role) { return role == ProviderRole::generator ? 0.7 : 0.0; }

std::string ProviderSpec::resolved_api_key_env() const {
    if (!api_key_env.empty()) return api_key_env;
    std::string name = "RAGALIGN_API_KEY_";
    for (unsigned char c : provider_id) name.push_back(std::isalnum(c) ? static_cast<char>(std::toupper(c)) : '_');
    return name;
}

ProviderSpec provider_from_json(const json& j) {
    ProviderSpec spec;
    try {
        spec.provider_id = j.at("provider_id").get<std::string>();
        spec.role = parse_role(j.value("role", std::string{"generator"}));
        spec.endpoint = j.value("endpoint", std::string{});
        spec.model_identifier = j.value("model_identifier", spec.provider_id);
        spec.max_in_flight = j.value("max_in_flight", std::size_t{4});
        spec.temperature = j.value("temperature", default_temperature(spec.role));
        spec.max_output_tokens = j.value("max_output_tokens", std::size_t{1024});
        spec.api_key_env = j.value("api_key_env", std::string{});
        spec.mock = j.value("mock", json::object());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad provider entry: ") + e.what());
    }
    if (spec.provider_id.empty()) throw ConfigError("provider_id must be non-empty");
    if (spec.max_in_flight == 0) throw ConfigError("max_in_flight must be positive for " + spec.provider_id);
    if (spec.max_output_tokens == 0) throw ConfigError("max_output_tokens must be positive for " + spec.provider_id);
    if (spec.temperature < 0.0) throw ConfigError("temperature must be >= 0 for " + spec.provider_id);
    return spec;
}

json to_json(const ProviderSpec& spec) {
    return json{{"provider_id", spec.provider_id},
                {"endpoint", spec.endpoint},
                {"model_identifier", spec.model_identifier},
                {"max_in_flight", spec.max_in_flight},
                {"temperature", spec.temperature},
                {"max_output_tokens", spec.max_output_tokens},
                {"role", to_string(spec.role)},
                {"api_key_env", spec.api_key_env},
                {"mock", spec.mock}};
}

std::vector<ProviderSpec> parse_pool(const json& providers) {
    if (!providers.is_array()) throw ConfigError("providers must be an array");
    std::vector<ProviderSpec> pool;
    std::set<std::string> seen;
    for (const auto& entry : providers) {
        auto spec = provider_from_json(entry);
        if (!seen.insert(spec.provider_id).second) throw ConfigError("duplicate provider_id: " + spec.provider_id);
        pool.push_back(std::move(spec));
    }
    return pool;
}

std::string_view to_string(FinishReason reason) {
    switch (reason) {
        case FinishReason::stop: return "stop";
        case FinishReason::length: return "length";
        case FinishReason::other: return "other";
    }
    return "other";
}

FinishReason parse_finish_reason(std::string_view text) {
    if (text == "stop") return FinishReason::stop;
    if (text == "length") return FinishReason::length;
    return FinishReason::other;
}

HttpChatBackend::HttpChatBackend(std::string endpoint, std::string api_key, int timeout_seconds)
    : endpoint_(std::move(endpoint)), api_key_(std::move(api_key)), timeout_seconds_(timeout_seconds) {}

BackendReply HttpChatBackend::send(const ChatRequest& request) {
    const json body{{"model", request.model_identifier},
                    {"messages", json::array({json{{"role", "user"}, {"content", request.prompt}}})},
                    {"temperature", request.temperature},
                    {"max_tokens", request.max_output_tokens}};
    const auto response = http::post_json(endpoint_, body.dump(), api_key_, timeout_seconds_);
    if (response.status == 0) return BackendReply{0, {}, FinishReason::other, response.transport_error};
    if (response.status < 200 || response.status >= 300) {
        return BackendReply{response.status, {}, FinishReason::other, response.body.substr(0, 512)};
    }
    try {
        const auto parsed = json::parse(response.body);
        const auto& choice = parsed.at("choices").at(0);
        BackendReply reply;
        reply.status = response.status;
        reply.text = choice.at("message").at("content").get<std::string>();
        if (choice.contains("finish_reason") && choice["finish_reason"].is_string())
            reply.finish_reason = parse_finish_reason(choice["finish_reason"].get<std::string>());
        return reply;
    } catch (const json::exception& e) {
        // A 2xx with an unreadable body is treated as a server fault so it is retried.
        return BackendReply{502, {}, FinishReason::other, std::string("malformed completion body: ") + e.what()};
    }
}

struct Gateway::Slot {
    ProviderSpec spec;
    std::shared_ptr<ChatBackend> backend;
    std::mutex mutex;
    std::condition_variable cv;
    std::size_t in_flight = 0;
    std::size_t network_calls = 0;
    std::size_t cache_hits = 0;
};

Gateway::Gateway(std::filesystem::path cache_dir, RetryPolicy retry)
    : cache_dir_(std::move(cache_dir)), retry_(retry) {
    if (cache_dir_.empty()) throw ArgumentError("gateway requires a cache directory");
    if (retry_.max_attempts == 0) throw ArgumentError("retry budget must allow at least one attempt");
}

Gateway::~Gateway() = default;

void Gateway::register_provider(const ProviderSpec& spec, std::shared_ptr<ChatBackend> backend) {
    if (!backend) throw ArgumentError("null backend for " + spec.provider_id);
    auto s = std::make_unique<Slot>();
    s->spec = spec;
    s->backend = std::move(backend);
    std::lock_guard lock(mutex_);
    if (slots_.count(spec.provider_id)) throw ConfigError("provider already registered: " + spec.provider_id);
    slots_.emplace(spec.provider_id, std::move(s));
}

bool Gateway::has_provider(const std::string& provider_id) const {
    std::lock_guard lock(mutex_);
    return slots_.count(provider_id) > 0;
}

Gateway::Slot& Gateway::slot(const std::string& provider_id) const {
    std::lock_guard lock(mutex_);
    auto it = slots_.find(provider_id);
    if (it == slots_.end()) throw ConfigError("unknown provider: " + provider_id);
    return *it->second;
}

const ProviderSpec& Gateway::provider(const std::string& provider_id) const { return slot(provider_id).spec; }

std::vector<ProviderSpec> Gateway::providers() const {
    std::lock_guard lock(mutex_);
    std::vector<ProviderSpec> out;
    for (const auto& [id, s] : slots_) out.push_back(s->spec);
    return out;
}

std::string Gateway::request_hash(const ProviderSpec& spec, std::string_view prompt, std::uint32_t salt) {
    // Length-prefixed fields keep the encoding injective.
    std::ostringstream key;
    auto field = [&key](std::string_view v) { key << v.size() << ':' << v << ';'; };
    field(spec.provider_id);
    field(spec.model_identifier);
    std::ostringstream temp;
    temp.precision(17);
    temp << spec.temperature;
    field(temp.str());
    field(std::to_string(spec.max_output_tokens));
    field(std::to_string(salt));
    field(prompt);
    return sha256_hex(key.str());
}

std::filesystem::path Gateway::cache_path(const std::string& provider_id, const std::string& hash) const {
    return cache_dir_ / provider_id / (hash + ".json");
}

void Gateway::sleep_backoff(std::size_t attempt) const {
    const auto delay = std::chrono::duration<double, std::milli>(retry_.base_backoff.count() *
                                                                 std::pow(retry_.backoff_multiplier, attempt));
    if (delay.count() > 0) std::this_thread::sleep_for(delay);
}

RawCompletion Gateway::complete(const ProviderSpec& spec, const std::string& prompt, std::uint32_t salt) {
    auto& s = slot(spec.provider_id);
    const auto hash = request_hash(spec, prompt, salt);
    const auto path = cache_path(spec.provider_id, hash);

    if (std::filesystem::exists(path)) {
        try {
            const auto entry = read_json(path);
            RawCompletion cached{spec.provider_id,
                                 hash,
                                 entry.at("text").get<std::string>(),
                                 entry.value("latency_ms", std::int64_t{0}),
                                 parse_finish_reason(entry.value("finish_reason", std::string{"stop"})),
                                 true};
            std::lock_guard lock(s.mutex);
            ++s.cache_hits;
            return cached;
        } catch (const Error&) {
            // Corrupt entry: fall through and refetch.
        } catch (const json::exception&) {
        }
    }

    const ChatRequest request{spec.provider_id, spec.model_identifier, prompt, spec.temperature,
                              spec.max_output_tokens, hash};
    BackendReply reply;
    std::int64_t latency_ms = 0;
    for (std::size_t attempt = 0; attempt < retry_.max_attempts; ++attempt) {
        if (attempt > 0) sleep_backoff(attempt - 1);
        {
            std::unique_lock lock(s.mutex);
            s.cv.wait(lock, [&] { return s.in_flight < std::max<std::size_t>(1, spec.max_in_flight); });
            ++s.in_flight;
            ++s.network_calls;
        }
        const auto start = std::chrono::steady_clock::now();
        try {
            reply = s.backend->send(request);
        } catch (const std::exception& e) {
            reply = BackendReply{0, {}, FinishReason::other, e.what()};
        }
        latency_ms =
            std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
        {
            std::lock_guard lock(s.mutex);
            --s.in_flight;
        }
        s.cv.notify_one();

        if (reply.status >= 200 && reply.status < 300) break;
        const bool retryable = reply.status == 0 || reply.status == 429 || reply.status >= 500;
        if (!retryable) {
            throw ProviderError(spec.provider_id + ": HTTP " + std::to_string(reply.status) + " " + reply.error,
                                reply.status, false);
        }
    }
    if (reply.status < 200 || reply.status >= 300) {
        throw ProviderError(spec.provider_id + ": giving up after " + std::to_string(retry_.max_attempts) +
                                " attempts (last status " + std::to_string(reply.status) + ") " + reply.error,
                            reply.status, true);
    }

    const auto now = std::chrono::duration_cast<std::chrono::seconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count();
    write_json(path, json{{"prompt_hash", sha256_hex(prompt)},
                          {"text", reply.text},
                          {"latency_ms", latency_ms},
                          {"timestamp", now},
                          {"finish_reason", to_string(reply.finish_reason)}});
    return RawCompletion{spec.provider_id, hash, reply.text, latency_ms, reply.finish_reason, false};
}

std::vector<BatchSlot> Gateway::complete_batch(const ProviderSpec& spec, const std::vector<std::string>& prompts,
                                               std::uint32_t salt) {
    std::vector<BatchSlot> results(prompts.size());
    parallel_for(prompts.size(), std::max<std::size_t>(1, spec.max_in_flight), [&](std::size_t i) {
        try {
            results[i].completion = complete(spec, prompts[i], salt);
            results[i].status = 200;
        } catch (const ProviderError& e) {
            results[i].error = e.what();
            results[i].status = e.status();
        } catch (const std::exception& e) {
            results[i].error = e.what();
        }
    });
    return results;
}

std::size_t Gateway::network_calls(const std::string& provider_id) const {
    auto& s = slot(provider_id);
    std::lock_guard lock(s.mutex);
    return s.network_calls;
}

std::size_t Gateway::cache_hits(const std::string& provider_id) const {
    auto& s = slot(provider_id);
    std::lock_guard lock(s.mutex);
    return s.cache_hits;
}

}  // namespace ragalign
