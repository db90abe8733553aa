#include "sageval/llm.hpp"

#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

#include <httplib.h>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "sageval/errors.hpp"
#include "sageval/io.hpp"

namespace sageval::llm {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Role role) {
    switch (role) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

namespace {

Role role_from(const std::string& s) {
    if (s == "system") return Role::system;
    if (s == "user") return Role::user;
    if (s == "assistant") return Role::assistant;
    throw InvalidRequest("unknown role '" + s + "'");
}

std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 digest failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

json alternatives_json(const std::vector<TokenAlternative>& alts) {
    json out = json::array();
    for (const auto& a : alts) out.push_back({{"token", a.token}, {"logprob", a.logprob}});
    return out;
}

std::vector<TokenLogprob> token_logprobs_from(const json& content, bool wire) {
    std::vector<TokenLogprob> out;
    const char* alt_key = wire ? "top_logprobs" : "top_alternatives";
    for (const auto& t : content) {
        TokenLogprob tl;
        tl.token = t.at("token").get<std::string>();
        tl.logprob = t.at("logprob").get<double>();
        if (auto it = t.find(alt_key); it != t.end() && it->is_array()) {
            for (const auto& a : *it) {
                tl.top_alternatives.push_back({a.at("token").get<std::string>(), a.at("logprob").get<double>()});
            }
        }
        out.push_back(std::move(tl));
    }
    return out;
}

}  // namespace

void ChatRequest::validate() const {
    if (messages.empty()) throw InvalidRequest("request has no messages");
    if (messages.front().role == Role::assistant) {
        throw InvalidRequest("first message must be a system or user message");
    }
    if (!(temperature >= 0.0)) throw InvalidRequest("temperature must be >= 0");
    if (max_tokens <= 0) throw InvalidRequest("max_tokens must be positive");
    if (sample_count < 1) throw InvalidRequest("sample_count must be >= 1");
}

void ChatResponse::validate(int sample_count) const {
    if (static_cast<int>(completions.size()) != sample_count) {
        throw MalformedResponse("expected " + std::to_string(sample_count) + " completions, got " +
                                std::to_string(completions.size()));
    }
    for (const auto& c : completions) {
        if (!c.token_logprobs) continue;
        for (const auto& t : *c.token_logprobs) {
            if (!(t.logprob <= 0.0)) throw MalformedResponse("token logprob > 0 for '" + t.token + "'");
            for (const auto& a : t.top_alternatives) {
                if (!(a.logprob <= 0.0)) throw MalformedResponse("alternative logprob > 0 for '" + a.token + "'");
            }
        }
    }
}

json canonical_json(const ChatRequest& r) {
    json messages = json::array();
    for (const auto& m : r.messages) messages.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
    return {{"messages", std::move(messages)},
            {"temperature", r.temperature},
            {"max_tokens", r.max_tokens},
            {"sample_count", r.sample_count},
            {"want_logprobs", r.want_logprobs},
            {"model_id", r.model_id}};
}

ChatRequest request_from_json(const json& v) {
    try {
        ChatRequest r;
        for (const auto& m : v.at("messages")) {
            r.messages.push_back({role_from(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
        }
        r.temperature = v.at("temperature").get<double>();
        r.max_tokens = v.at("max_tokens").get<int>();
        r.sample_count = v.at("sample_count").get<int>();
        r.want_logprobs = v.at("want_logprobs").get<bool>();
        r.model_id = v.at("model_id").get<std::string>();
        return r;
    } catch (const json::exception& e) {
        throw InvalidRequest(std::string("bad request JSON: ") + e.what());
    }
}

std::string fingerprint(const ChatRequest& request) {
    // nlohmann::json objects keep keys sorted, so dump() is canonical.
    return sha256_hex(canonical_json(request).dump());
}

json to_json(const ChatResponse& response) {
    json completions = json::array();
    for (const auto& c : response.completions) {
        json jc = {{"text", c.text}};
        if (c.token_logprobs) {
            json toks = json::array();
            for (const auto& t : *c.token_logprobs) {
                toks.push_back({{"token", t.token},
                                {"logprob", t.logprob},
                                {"top_alternatives", alternatives_json(t.top_alternatives)}});
            }
            jc["token_logprobs"] = std::move(toks);
        }
        completions.push_back(std::move(jc));
    }
    return {{"completions", std::move(completions)},
            {"usage",
             {{"prompt_tokens", response.usage.prompt_tokens},
              {"completion_tokens", response.usage.completion_tokens}}}};
}

ChatResponse response_from_json(const json& v) {
    try {
        ChatResponse r;
        for (const auto& c : v.at("completions")) {
            Completion comp;
            comp.text = c.at("text").get<std::string>();
            if (auto it = c.find("token_logprobs"); it != c.end() && !it->is_null()) {
                comp.token_logprobs = token_logprobs_from(*it, false);
            }
            r.completions.push_back(std::move(comp));
        }
        if (auto it = v.find("usage"); it != v.end()) {
            r.usage.prompt_tokens = it->value("prompt_tokens", 0LL);
            r.usage.completion_tokens = it->value("completion_tokens", 0LL);
        }
        return r;
    } catch (const json::exception& e) {
        throw MalformedResponse(std::string("bad response JSON: ") + e.what());
    }
}

json to_wire(const ChatRequest& r) {
    json messages = json::array();
    for (const auto& m : r.messages) messages.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
    json body = {{"model", r.model_id},
                 {"messages", std::move(messages)},
                 {"temperature", r.temperature},
                 {"n", r.sample_count},
                 {"max_tokens", r.max_tokens}};
    if (r.want_logprobs) {
        body["logprobs"] = true;
        body["top_logprobs"] = 5;
    }
    return body;
}

ChatResponse from_wire(const json& body, int sample_count) {
    ChatResponse out;
    try {
        const json& choices = body.at("choices");
        if (!choices.is_array()) throw MalformedResponse("'choices' is not an array");
        // Choices may arrive out of order; `index` is authoritative when present.
        std::vector<std::pair<long long, Completion>> indexed;
        for (std::size_t i = 0; i < choices.size(); ++i) {
            const json& ch = choices[i];
            Completion c;
            const json& content = ch.at("message").at("content");
            c.text = content.is_null() ? std::string() : content.get<std::string>();
            if (auto lp = ch.find("logprobs"); lp != ch.end() && lp->is_object()) {
                if (auto ct = lp->find("content"); ct != lp->end() && ct->is_array()) {
                    c.token_logprobs = token_logprobs_from(*ct, true);
                }
            }
            indexed.emplace_back(ch.value("index", static_cast<long long>(i)), std::move(c));
        }
        std::stable_sort(indexed.begin(), indexed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        for (auto& [_, c] : indexed) out.completions.push_back(std::move(c));
        if (auto u = body.find("usage"); u != body.end() && u->is_object()) {
            out.usage.prompt_tokens = u->value("prompt_tokens", 0LL);
            out.usage.completion_tokens = u->value("completion_tokens", 0LL);
        }
    } catch (const json::exception& e) {
        throw MalformedResponse(std::string("response body does not match the chat-completions format: ") + e.what());
    }
    out.validate(sample_count);
    return out;
}

HttpBackend::HttpBackend(BackendConfig config, Sleeper sleeper)
    : config_(std::move(config)), sleeper_(std::move(sleeper)) {
    if (config_.max_retries < 0) throw InvalidRequest("max_retries must be >= 0");
    const auto scheme_end = config_.endpoint_url.find("://");
    if (scheme_end == std::string::npos) {
        throw InvalidRequest("endpoint_url must start with http:// or https://");
    }
    const auto path_start = config_.endpoint_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        scheme_host_port_ = config_.endpoint_url;
        path_ = "/v1/chat/completions";
    } else {
        scheme_host_port_ = config_.endpoint_url.substr(0, path_start);
        path_ = config_.endpoint_url.substr(path_start);
    }
    if (!sleeper_) {
        sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    }
}

std::vector<RetryEvent> HttpBackend::retry_log() const {
    std::lock_guard lock(log_mutex_);
    return retry_log_;
}

ChatResponse HttpBackend::complete(const ChatRequest& request) {
    request.validate();
    httplib::Headers headers;
    if (!config_.api_key_env_var.empty()) {
        const char* key = std::getenv(config_.api_key_env_var.c_str());
        if (!key || !*key) {
            throw AuthError("environment variable " + config_.api_key_env_var + " is not set");
        }
        headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    // Built once so every retry sends identical bytes.
    const std::string body = to_wire(request).dump();

    thread_local std::minstd_rand jitter_rng{std::random_device{}()};
    for (int attempt = 1;; ++attempt) {
        httplib::Client client(scheme_host_port_);
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
        const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
        client.set_connection_timeout(secs.count(), usecs.count());
        client.set_read_timeout(secs.count(), usecs.count());
        client.set_write_timeout(secs.count(), usecs.count());

        auto res = client.Post(path_, headers, body, "application/json");
        int status = 0;
        std::string reason;
        if (!res) {
            reason = "transport error: " + httplib::to_string(res.error());
        } else {
            status = res->status;
            if (status >= 200 && status < 300) {
                json parsed;
                try {
                    parsed = json::parse(res->body);
                } catch (const json::parse_error& e) {
                    throw MalformedResponse(std::string("response body is not JSON: ") + e.what());
                }
                return from_wire(parsed, request.sample_count);
            }
            if (status == 401 || status == 403) {
                throw AuthError("endpoint rejected credentials (HTTP " + std::to_string(status) + ")");
            }
            if (status != 429 && status < 500) throw RemoteError(status, res->body);
            reason = "HTTP " + std::to_string(status);
        }

        if (attempt > config_.max_retries) {
            if (status != 0) throw RemoteError(status, res->body);
            throw TransportError(reason + " after " + std::to_string(attempt) + " attempts");
        }
        const auto base = config_.retry_base_delay.count();
        std::uniform_int_distribution<long long> jitter(0, base > 0 ? base : 0);
        const std::chrono::milliseconds delay(base * (1LL << std::min(attempt - 1, 16)) + jitter(jitter_rng));
        {
            std::lock_guard lock(log_mutex_);
            retry_log_.push_back({attempt, status, reason, delay});
        }
        spdlog::warn("chat request attempt {} failed ({}); retrying in {} ms", attempt, reason, delay.count());
        sleeper_(delay);
    }
}

fs::path fixture_path(const fs::path& dir, const std::string& fp) { return dir / (fp + ".json"); }

void write_fixture(const fs::path& dir, const ChatRequest& request, const ChatResponse& response) {
    const std::string fp = fingerprint(request);
    io::write_json_atomic(fixture_path(dir, fp),
                          {{"fingerprint", fp}, {"request", canonical_json(request)}, {"response", to_json(response)}});
}

ScriptedBackend::ScriptedBackend(std::vector<fs::path> fixture_dirs) : dirs_(std::move(fixture_dirs)) {}

ChatResponse ScriptedBackend::complete(const ChatRequest& request) {
    request.validate();
    calls_.fetch_add(1);
    const std::string fp = fingerprint(request);
    for (const auto& dir : dirs_) {
        const fs::path path = fixture_path(dir, fp);
        if (!fs::exists(path)) continue;
        const json doc = io::read_json_file(path);
        ChatResponse response = response_from_json(doc.at("response"));
        response.validate(request.sample_count);
        return response;
    }
    throw MissingFixture("no scripted fixture for fingerprint " + fp);
}

std::unique_ptr<Backend> scripted_backend(const fs::path& fixture_dir) {
    return std::make_unique<ScriptedBackend>(std::vector<fs::path>{fixture_dir});
}

CachingBackend::CachingBackend(Backend& inner, fs::path cache_dir) : inner_(inner), dir_(std::move(cache_dir)) {}

std::shared_ptr<std::mutex> CachingBackend::lock_for(const std::string& fp) {
    std::lock_guard lock(map_mutex_);
    auto& slot = locks_[fp];
    if (!slot) slot = std::make_shared<std::mutex>();
    return slot;
}

ChatResponse CachingBackend::complete(const ChatRequest& request) {
    request.validate();
    const std::string fp = fingerprint(request);
    auto fp_lock = lock_for(fp);
    std::lock_guard guard(*fp_lock);
    const fs::path path = fixture_path(dir_, fp);
    if (fs::exists(path)) {
        try {
            ChatResponse cached = response_from_json(io::read_json_file(path).at("response"));
            cached.validate(request.sample_count);
            hits_.fetch_add(1);
            return cached;
        } catch (const std::exception& e) {
            spdlog::warn("discarding unreadable cache entry {}: {}", path.string(), e.what());
        }
    }
    inner_calls_.fetch_add(1);
    ChatResponse response = inner_.complete(request);
    write_fixture(dir_, request, response);
    return response;
}

ThrottledBackend::ThrottledBackend(Backend& inner, int limit) : inner_(inner), limit_(limit) {
    if (limit_ < 1) throw InvalidRequest("concurrency limit must be >= 1");
}

int ThrottledBackend::peak_in_flight() const {
    std::lock_guard lock(mutex_);
    return peak_;
}

ChatResponse ThrottledBackend::complete(const ChatRequest& request) {
    {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return in_flight_ < limit_; });
        ++in_flight_;
        peak_ = std::max(peak_, in_flight_);
    }
    struct Release {
        ThrottledBackend& self;
        ~Release() {
            {
                std::lock_guard lock(self.mutex_);
                --self.in_flight_;
            }
            self.cv_.notify_one();
        }
    } release{*this};
    return inner_.complete(request);
}

}  // namespace sageval::llm
