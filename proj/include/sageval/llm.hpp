#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace sageval::llm {

enum class Role { system, user, assistant };
std::string_view to_string(Role role);

struct Message {
    Role role = Role::user;
    std::string content;

    bool operator==(const Message&) const = default;
};

struct ChatRequest {
    std::vector<Message> messages;
    double temperature = 0.0;
    int max_tokens = 512;
    int sample_count = 1;  // independent completions requested (wire field `n`)
    bool want_logprobs = false;
    std::string model_id;

    /// Throws InvalidRequest.
    void validate() const;

    bool operator==(const ChatRequest&) const = default;
};

struct TokenAlternative {
    std::string token;
    double logprob = 0.0;

    bool operator==(const TokenAlternative&) const = default;
};

struct TokenLogprob {
    std::string token;
    double logprob = 0.0;
    std::vector<TokenAlternative> top_alternatives;

    bool operator==(const TokenLogprob&) const = default;
};

struct Completion {
    std::string text;
    std::optional<std::vector<TokenLogprob>> token_logprobs;

    bool operator==(const Completion&) const = default;
};

struct Usage {
    long long prompt_tokens = 0;
    long long completion_tokens = 0;

    bool operator==(const Usage&) const = default;
};

struct ChatResponse {
    std::vector<Completion> completions;
    Usage usage;

    /// Throws MalformedResponse unless there are exactly `sample_count`
    /// completions and every logprob is <= 0.
    void validate(int sample_count) const;

    bool operator==(const ChatResponse&) const = default;
};

/// Hex SHA-256 over the canonical JSON of the request. Stable across
/// processes and platforms.
std::string fingerprint(const ChatRequest& request);

nlohmann::json canonical_json(const ChatRequest& request);
ChatRequest request_from_json(const nlohmann::json& value);

nlohmann::json to_json(const ChatResponse& response);
ChatResponse response_from_json(const nlohmann::json& value);

/// Request body in the common chat-completions wire format.
nlohmann::json to_wire(const ChatRequest& request);
/// Parses a chat-completions response body. Throws MalformedResponse.
ChatResponse from_wire(const nlohmann::json& body, int sample_count);

class Backend {
public:
    virtual ~Backend() = default;
    virtual ChatResponse complete(const ChatRequest& request) = 0;
};

struct BackendConfig {
    std::string endpoint_url;
    std::string api_key_env_var = "OPENAI_API_KEY";  // name only; the key is read at call time
    std::chrono::milliseconds timeout{60000};
    int max_retries = 5;
    std::chrono::milliseconds retry_base_delay{500};
};

struct RetryEvent {
    int attempt = 0;  // 1-based attempt that failed
    int status = 0;   // 0 for transport failures
    std::string reason;
    std::chrono::milliseconds delay{0};
};

/// Live HTTP backend. Transient failures (429, 5xx, transport errors) are
/// retried with exponential backoff plus jitter up to `max_retries` times.
class HttpBackend : public Backend {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit HttpBackend(BackendConfig config, Sleeper sleeper = {});

    ChatResponse complete(const ChatRequest& request) override;

    std::vector<RetryEvent> retry_log() const;

private:
    BackendConfig config_;
    Sleeper sleeper_;
    std::string scheme_host_port_;
    std::string path_;
    mutable std::mutex log_mutex_;
    std::vector<RetryEvent> retry_log_;
};

/// Replays canned responses from one JSON file per fingerprint. Directories
/// are searched in order; the first match wins.
class ScriptedBackend : public Backend {
public:
    explicit ScriptedBackend(std::vector<std::filesystem::path> fixture_dirs);

    ChatResponse complete(const ChatRequest& request) override;

    long long call_count() const { return calls_.load(); }

private:
    std::vector<std::filesystem::path> dirs_;
    std::atomic<long long> calls_{0};
};

std::unique_ptr<Backend> scripted_backend(const std::filesystem::path& fixture_dir);

/// Fixture / cache file layout shared by ScriptedBackend and CachingBackend.
std::filesystem::path fixture_path(const std::filesystem::path& dir, const std::string& fingerprint);
void write_fixture(const std::filesystem::path& dir, const ChatRequest& request, const ChatResponse& response);

/// On-disk response cache keyed by fingerprint. Concurrent identical requests
/// are serialized so the inner backend sees each fingerprint at most once.
class CachingBackend : public Backend {
public:
    CachingBackend(Backend& inner, std::filesystem::path cache_dir);

    ChatResponse complete(const ChatRequest& request) override;

    long long inner_calls() const { return inner_calls_.load(); }
    long long cache_hits() const { return hits_.load(); }

private:
    std::shared_ptr<std::mutex> lock_for(const std::string& fp);

    Backend& inner_;
    std::filesystem::path dir_;
    std::mutex map_mutex_;
    std::map<std::string, std::shared_ptr<std::mutex>> locks_;
    std::atomic<long long> inner_calls_{0};
    std::atomic<long long> hits_{0};
};

/// Bounds the number of in-flight complete() calls.
class ThrottledBackend : public Backend {
public:
    ThrottledBackend(Backend& inner, int limit);

    ChatResponse complete(const ChatRequest& request) override;

    int peak_in_flight() const;

private:
    Backend& inner_;
    int limit_;
    mutable std::mutex mutex_;
    std::condition_variable cv_;
    int in_flight_ = 0;
    int peak_ = 0;
};

/// Adapts a callable into a Backend; handy for tests and fixture recording.
class FunctionBackend : public Backend {
public:
    using Fn = std::function<ChatResponse(const ChatRequest&)>;
    explicit FunctionBackend(Fn fn) : fn_(std::move(fn)) {}
    ChatResponse complete(const ChatRequest& request) override { return fn_(request); }

private:
    Fn fn_;
};

}  // namespace sageval::llm
