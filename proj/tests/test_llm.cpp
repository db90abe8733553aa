#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "sageval/errors.hpp"
#include "sageval/io.hpp"
#include "sageval/llm.hpp"
#include "test_util.hpp"

using namespace sageval;
using namespace sageval::llm;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

ChatRequest basic_request(int n = 1, bool logprobs = false) {
    ChatRequest r;
    r.messages = {{Role::system, "You are a grader."}, {Role::user, "Rate this form."}};
    r.temperature = n > 1 ? 1.0 : 0.0;
    r.sample_count = n;
    r.want_logprobs = logprobs;
    r.model_id = "gpt-4";
    return r;
}

ChatResponse canned(int n, const std::string& text = "Score: 3") {
    ChatResponse r;
    for (int i = 0; i < n; ++i) r.completions.push_back({text, std::nullopt});
    return r;
}

json wire_body(int n) {
    json choices = json::array();
    for (int i = 0; i < n; ++i) {
        choices.push_back({{"index", i}, {"message", {{"role", "assistant"}, {"content", "Score: 4"}}}});
    }
    return {{"choices", choices}, {"usage", {{"prompt_tokens", 10}, {"completion_tokens", 3 * n}}}};
}

constexpr const char* kKeyVar = "SAGEVAL_TEST_API_KEY";
constexpr const char* kSecret = "sk-test-0123456789abcdef";

// Serves a scripted sequence of (status, body) replies, then repeats the last.
class StubServer {
public:
    explicit StubServer(std::vector<std::pair<int, std::string>> replies) : replies_(std::move(replies)) {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            std::lock_guard lock(mutex_);
            bodies_.push_back(req.body);
            auth_.push_back(req.get_header_value("Authorization"));
            const auto& [status, body] = replies_[std::min(hits_, replies_.size() - 1)];
            ++hits_;
            res.status = status;
            res.set_content(body, "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer() {
        server_.stop();
        thread_.join();
    }

    BackendConfig config(int max_retries = 5) const {
        BackendConfig c;
        c.endpoint_url = "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions";
        c.api_key_env_var = kKeyVar;
        c.timeout = std::chrono::milliseconds(5000);
        c.max_retries = max_retries;
        c.retry_base_delay = std::chrono::milliseconds(10);
        return c;
    }
    std::vector<std::string> bodies() const {
        std::lock_guard lock(mutex_);
        return bodies_;
    }
    std::vector<std::string> auth() const {
        std::lock_guard lock(mutex_);
        return auth_;
    }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::vector<std::pair<int, std::string>> replies_;
    mutable std::mutex mutex_;
    std::size_t hits_ = 0;
    std::vector<std::string> bodies_;
    std::vector<std::string> auth_;
};

class HttpBackendTest : public ::testing::Test {
protected:
    void SetUp() override { ::setenv(kKeyVar, kSecret, 1); }
    void TearDown() override { ::unsetenv(kKeyVar); }

    std::vector<std::chrono::milliseconds> slept;
    HttpBackend::Sleeper sleeper() {
        return [this](std::chrono::milliseconds d) { slept.push_back(d); };
    }
};

}  // namespace

TEST(Fingerprint, StableAndSensitive) {
    const auto a = basic_request();
    EXPECT_EQ(fingerprint(a), fingerprint(basic_request()));
    EXPECT_EQ(fingerprint(a).size(), 64u);
    auto b = a;
    b.temperature = 0.5;
    EXPECT_NE(fingerprint(a), fingerprint(b));
    b = a;
    b.messages[1].content += " ";
    EXPECT_NE(fingerprint(a), fingerprint(b));
    b = a;
    b.want_logprobs = true;
    EXPECT_NE(fingerprint(a), fingerprint(b));
    b = a;
    b.max_tokens = 256;
    EXPECT_NE(fingerprint(a), fingerprint(b));
}

TEST(Fingerprint, MatchesFrozenDigests) {
    json digests = json::object();
    digests["basic"] = fingerprint(basic_request());
    digests["sampling_20"] = fingerprint(basic_request(20));
    digests["logprobs"] = fingerprint(basic_request(1, true));
    auto unicode = basic_request();
    unicode.messages[1].content = "Évaluez ce formulaire ✓";
    digests["unicode"] = fingerprint(unicode);
    const auto diff = support::golden_mismatch(support::golden_dir() / "fingerprints.json", digests.dump(2) + "\n");
    EXPECT_TRUE(diff.empty()) << diff;
}

TEST(Fingerprint, SampleFixtureNamesAgree) {
    int checked = 0;
    for (const auto& entry : fs::directory_iterator(support::sample_dir() / "fixtures" / "main")) {
        const json doc = io::read_json_file(entry.path());
        const auto req = request_from_json(doc.at("request"));
        EXPECT_EQ(fingerprint(req) + ".json", entry.path().filename().string());
        if (++checked == 10) break;
    }
    EXPECT_EQ(checked, 10);
}

TEST(Wire, RequestBody) {
    const json body = to_wire(basic_request(20, false));
    EXPECT_EQ(body["n"], 20);
    EXPECT_EQ(body["model"], "gpt-4");
    EXPECT_EQ(body["messages"][0]["role"], "system");
    EXPECT_FALSE(body.contains("logprobs"));
    EXPECT_EQ(to_wire(basic_request(1, true))["logprobs"], true);
}

TEST(Wire, ResponseParsing) {
    const auto r = from_wire(wire_body(3), 3);
    EXPECT_EQ(r.completions.size(), 3u);
    EXPECT_EQ(r.usage.completion_tokens, 9);
    EXPECT_THROW(from_wire(wire_body(2), 3), MalformedResponse);
    EXPECT_THROW(from_wire(json{{"nope", 1}}, 1), MalformedResponse);

    json lp = wire_body(1);
    lp["choices"][0]["logprobs"] = {{"content", {{{"token", "4"}, {"logprob", -0.2},
                                                  {"top_logprobs", {{{"token", "4"}, {"logprob", -0.2}},
                                                                    {{"token", "3"}, {"logprob", -1.9}}}}}}}};
    const auto with = from_wire(lp, 1);
    ASSERT_TRUE(with.completions[0].token_logprobs);
    EXPECT_EQ(with.completions[0].token_logprobs->at(0).top_alternatives.size(), 2u);

    lp["choices"][0]["logprobs"]["content"][0]["logprob"] = 0.5;
    EXPECT_THROW(from_wire(lp, 1), MalformedResponse);
}

TEST(Wire, OutOfOrderChoicesUseIndex) {
    json body = wire_body(2);
    body["choices"][0]["message"]["content"] = "first";
    body["choices"][1]["message"]["content"] = "second";
    std::swap(body["choices"][0], body["choices"][1]);
    const auto r = from_wire(body, 2);
    EXPECT_EQ(r.completions[0].text, "first");
}

TEST(Request, Validation) {
    auto r = basic_request();
    r.messages.clear();
    EXPECT_THROW(r.validate(), InvalidRequest);
    r = basic_request();
    r.sample_count = 0;
    EXPECT_THROW(r.validate(), InvalidRequest);
    r = basic_request();
    r.temperature = -1;
    EXPECT_THROW(r.validate(), InvalidRequest);
    r = basic_request();
    r.messages = {{Role::assistant, "hi"}};
    EXPECT_THROW(r.validate(), InvalidRequest);
}

TEST(Request, JsonRoundTrip) {
    const auto r = basic_request(20, true);
    EXPECT_EQ(request_from_json(canonical_json(r)), r);
    const auto resp = canned(2);
    EXPECT_EQ(response_from_json(to_json(resp)), resp);
}

TEST(Scripted, ReplaysFixtureAndReportsMissing) {
    support::TempDir dir("scripted");
    const auto req = basic_request(2);
    write_fixture(dir.path(), req, canned(2, "Score: 5"));
    ScriptedBackend backend({dir.path()});
    EXPECT_EQ(backend.complete(req).completions[0].text, "Score: 5");
    auto other = req;
    other.messages[1].content = "Something else";
    try {
        backend.complete(other);
        FAIL();
    } catch (const MissingFixture& e) {
        EXPECT_NE(std::string(e.what()).find(fingerprint(other)), std::string::npos);
    }
    EXPECT_EQ(backend.call_count(), 2);
}

TEST(Scripted, FirstDirectoryWins) {
    support::TempDir a("overlay"), b("base");
    const auto req = basic_request();
    write_fixture(a.path(), req, canned(1, "overlay"));
    write_fixture(b.path(), req, canned(1, "base"));
    ScriptedBackend backend({a.path(), b.path()});
    EXPECT_EQ(backend.complete(req).completions[0].text, "overlay");
}

TEST(Caching, SecondCallIsAHit) {
    support::TempDir dir("cache");
    int inner_calls = 0;
    FunctionBackend inner([&](const ChatRequest& r) {
        ++inner_calls;
        return canned(r.sample_count);
    });
    CachingBackend cache(inner, dir.path());
    const auto first = cache.complete(basic_request(3));
    const auto second = cache.complete(basic_request(3));
    EXPECT_EQ(first, second);
    EXPECT_EQ(inner_calls, 1);
    EXPECT_EQ(cache.cache_hits(), 1);

    // A fresh instance over the same directory still hits.
    CachingBackend again(inner, dir.path());
    again.complete(basic_request(3));
    EXPECT_EQ(inner_calls, 1);
}

TEST(Caching, ConcurrentIdenticalRequestsReachInnerOnce) {
    support::TempDir dir("cache-mt");
    std::atomic<int> inner_calls{0};
    FunctionBackend inner([&](const ChatRequest& r) {
        ++inner_calls;
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
        return canned(r.sample_count);
    });
    CachingBackend cache(inner, dir.path());
    std::vector<std::jthread> threads;
    for (int i = 0; i < 8; ++i) threads.emplace_back([&] { cache.complete(basic_request(2)); });
    threads.clear();
    EXPECT_EQ(inner_calls.load(), 1);
    EXPECT_EQ(cache.inner_calls(), 1);
}

TEST(Caching, ErrorsAreNotCached) {
    support::TempDir dir("cache-err");
    int calls = 0;
    FunctionBackend inner([&](const ChatRequest& r) -> ChatResponse {
        if (++calls == 1) throw TransportError("down");
        return canned(r.sample_count);
    });
    CachingBackend cache(inner, dir.path());
    EXPECT_THROW(cache.complete(basic_request()), TransportError);
    EXPECT_NO_THROW(cache.complete(basic_request()));
    EXPECT_EQ(calls, 2);
}

TEST(Throttled, PeakNeverExceedsLimit) {
    FunctionBackend inner([](const ChatRequest& r) {
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        return canned(r.sample_count);
    });
    ThrottledBackend throttled(inner, 3);
    {
        std::vector<std::jthread> threads;
        for (int i = 0; i < 12; ++i) threads.emplace_back([&] { throttled.complete(basic_request()); });
    }
    EXPECT_LE(throttled.peak_in_flight(), 3);
    EXPECT_GE(throttled.peak_in_flight(), 1);
    EXPECT_THROW(ThrottledBackend(inner, 0), InvalidRequest);
}

TEST_F(HttpBackendTest, RetriesRateLimitThenSucceeds) {
    StubServer stub({{429, "{}"}, {429, "{}"}, {200, wire_body(1).dump()}});
    HttpBackend backend(stub.config(), sleeper());
    const auto resp = backend.complete(basic_request());
    EXPECT_EQ(resp.completions.size(), 1u);
    const auto log = backend.retry_log();
    ASSERT_EQ(log.size(), 2u);
    EXPECT_EQ(log[0].status, 429);
    EXPECT_EQ(log[1].attempt, 2);
    EXPECT_EQ(slept.size(), 2u);
    EXPECT_GE(slept[1], slept[0]);
    // Every attempt sends the same bytes.
    const auto bodies = stub.bodies();
    ASSERT_EQ(bodies.size(), 3u);
    EXPECT_EQ(bodies[0], bodies[1]);
    EXPECT_EQ(bodies[1], bodies[2]);
    EXPECT_EQ(stub.auth()[0], std::string("Bearer ") + kSecret);
}

TEST_F(HttpBackendTest, SamplingRequestReturnsAllCompletions) {
    StubServer stub({{200, wire_body(20).dump()}});
    HttpBackend backend(stub.config(), sleeper());
    EXPECT_EQ(backend.complete(basic_request(20)).completions.size(), 20u);
    EXPECT_EQ(json::parse(stub.bodies()[0])["n"], 20);
}

TEST_F(HttpBackendTest, ShortCompletionCountIsMalformed) {
    StubServer stub({{200, wire_body(19).dump()}});
    HttpBackend backend(stub.config(), sleeper());
    EXPECT_THROW(backend.complete(basic_request(20)), MalformedResponse);
}

TEST_F(HttpBackendTest, NonJsonBodyIsMalformed) {
    StubServer stub({{200, "<html>oops</html>"}});
    HttpBackend backend(stub.config(), sleeper());
    EXPECT_THROW(backend.complete(basic_request()), MalformedResponse);
}

TEST_F(HttpBackendTest, UnauthorizedIsNotRetried) {
    StubServer stub({{401, R"({"error":"bad key"})"}});
    HttpBackend backend(stub.config(), sleeper());
    EXPECT_THROW(backend.complete(basic_request()), AuthError);
    EXPECT_EQ(stub.bodies().size(), 1u);
    EXPECT_TRUE(slept.empty());
}

TEST_F(HttpBackendTest, ServerErrorsExhaustRetries) {
    StubServer stub({{500, "internal"}});
    HttpBackend backend(stub.config(3), sleeper());
    try {
        backend.complete(basic_request());
        FAIL();
    } catch (const RemoteError& e) {
        EXPECT_EQ(e.status(), 500);
    }
    EXPECT_EQ(stub.bodies().size(), 4u);
    EXPECT_EQ(backend.retry_log().size(), 3u);
}

TEST_F(HttpBackendTest, ClientErrorIsRemoteErrorWithoutRetry) {
    StubServer stub({{400, "bad request"}});
    HttpBackend backend(stub.config(), sleeper());
    EXPECT_THROW(backend.complete(basic_request()), RemoteError);
    EXPECT_EQ(stub.bodies().size(), 1u);
}

TEST_F(HttpBackendTest, KeyNeverAppearsInErrors) {
    for (int status : {401, 400, 500}) {
        StubServer stub({{status, "nope"}});
        HttpBackend backend(stub.config(1), sleeper());
        try {
            backend.complete(basic_request());
            FAIL();
        } catch (const Error& e) {
            EXPECT_EQ(std::string(e.what()).find(kSecret), std::string::npos) << status;
        }
        for (const auto& ev : backend.retry_log()) EXPECT_EQ(ev.reason.find(kSecret), std::string::npos);
    }
}

TEST_F(HttpBackendTest, UnsetKeyIsAuthErrorNamingTheVariable) {
    ::unsetenv(kKeyVar);
    StubServer stub({{200, wire_body(1).dump()}});
    HttpBackend backend(stub.config(), sleeper());
    try {
        backend.complete(basic_request());
        FAIL();
    } catch (const AuthError& e) {
        EXPECT_NE(std::string(e.what()).find(kKeyVar), std::string::npos);
    }
    EXPECT_TRUE(stub.bodies().empty());
}

TEST_F(HttpBackendTest, UnreachableEndpointIsTransportError) {
    BackendConfig c;
    c.endpoint_url = "http://127.0.0.1:1/v1/chat/completions";
    c.api_key_env_var = kKeyVar;
    c.max_retries = 2;
    c.timeout = std::chrono::milliseconds(500);
    HttpBackend backend(c, sleeper());
    EXPECT_THROW(backend.complete(basic_request()), TransportError);
    EXPECT_EQ(backend.retry_log().size(), 2u);
    EXPECT_EQ(backend.retry_log()[0].status, 0);
}

TEST(HttpBackendConfig, RejectsBadEndpoint) {
    BackendConfig c;
    c.endpoint_url = "localhost:8080";
    EXPECT_THROW(HttpBackend{c}, InvalidRequest);
}
