#include <cstdlib>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "convplan/gateway.hpp"
#include "test_util.hpp"

using namespace convplan;
using testutil::mock;

namespace {

MockRule rule(std::string pattern, std::string response) {
  MockRule r;
  r.pattern = std::move(pattern);
  r.response = std::move(response);
  return r;
}

MockRule failing(std::string pattern, ErrorCode code, int times) {
  MockRule r;
  r.pattern = std::move(pattern);
  r.response = "recovered";
  r.error = code;
  r.fail_times = times;
  return r;
}

}  // namespace

TEST(Gateway, MockExpandsCaptures) {
  Gateway gw(mock({rule("name is (\\w+)", "hello $1")}));
  const auto r = gw.complete(ChatRequest::single("m", "my name is Ada"));
  EXPECT_EQ(r.text, "hello Ada");
  EXPECT_FALSE(r.cached);
}

TEST(Gateway, ContainsGuardsRule) {
  auto r = rule("^", "guarded");
  r.contains = {"needle"};
  Gateway gw(mock({r}, "fallback"));
  EXPECT_EQ(gw.complete(ChatRequest::single("m", "haystack")).text, "fallback");
  EXPECT_EQ(gw.complete(ChatRequest::single("m", "a needle here")).text, "guarded");
}

TEST(Gateway, CacheHitOnIdenticalRequest) {
  Gateway gw(mock({}, "same"));
  const auto req = ChatRequest::single("m", "q", 0.0);
  EXPECT_FALSE(gw.complete(req).cached);
  EXPECT_TRUE(gw.complete(req).cached);
  EXPECT_EQ(gw.cache_entries(), 1u);
  auto other = req;
  other.temperature = 0.5;
  EXPECT_FALSE(gw.complete(other).cached);
}

TEST(Gateway, RetriesTransientFailures) {
  Gateway gw(mock({failing("flaky", ErrorCode::kProviderUnavailable, 2)}));
  EXPECT_EQ(gw.complete(ChatRequest::single("m", "flaky call")).text, "recovered");
}

TEST(Gateway, GivesUpAfterRetries) {
  auto cfg = mock({failing("slow", ErrorCode::kTimeout, 0)});
  cfg.max_retries = 2;
  Gateway gw(cfg);
  EXPECT_CONVPLAN_ERROR(gw.complete(ChatRequest::single("m", "slow call")), ErrorCode::kTimeout);
}

TEST(Gateway, AuthErrorsAreNotRetried) {
  Gateway gw(mock({failing("x", ErrorCode::kAuthError, 1)}));
  EXPECT_CONVPLAN_ERROR(gw.complete(ChatRequest::single("m", "x")), ErrorCode::kAuthError);
}

TEST(Gateway, RejectsInvalidRequests) {
  Gateway gw(mock({}, "ok"));
  EXPECT_CONVPLAN_ERROR(gw.complete(ChatRequest{}), ErrorCode::kInvalidArgument);
  EXPECT_CONVPLAN_ERROR(gw.complete(ChatRequest::single("m", "q", 3.0)), ErrorCode::kInvalidArgument);
}

TEST(Gateway, RecordThenReplay) {
  testutil::TempDir dir;
  const auto cache = dir / "cache.jsonl";
  {
    Gateway live(record_run(mock({}, "recorded answer"), cache));
    live.complete(ChatRequest::single("m", "question one"));
  }
  Gateway replay(replay_config(cache));
  const auto r = replay.complete(ChatRequest::single("m", "question one"));
  EXPECT_EQ(r.text, "recorded answer");
  EXPECT_TRUE(r.cached);
  EXPECT_CONVPLAN_ERROR(replay.complete(ChatRequest::single("m", "question two")),
                     ErrorCode::kCacheMiss);
}

TEST(Gateway, RecordRunNeedsWritablePath) {
  EXPECT_CONVPLAN_ERROR(record_run(mock({}, "x"), "/proc/definitely/not/writable.jsonl"),
                     ErrorCode::kIoError);
}

TEST(ProviderConfig, RejectsInlineSecrets) {
  EXPECT_CONVPLAN_ERROR(provider_config_from_json({{"kind", "live"}, {"api_key", "sk-123"}}),
                     ErrorCode::kConfigError);
  const auto c = provider_config_from_json(
      {{"kind", "live"}, {"endpoint", "http://localhost:1"}, {"credential_env", "SOME_KEY"}});
  EXPECT_EQ(c.credential_env, "SOME_KEY");
  EXPECT_EQ(to_json(c).dump().find("sk-"), std::string::npos);
}

TEST(ProviderConfig, ReplayNeedsCachePath) {
  EXPECT_CONVPLAN_ERROR(provider_config_from_json({{"kind", "replay"}}), ErrorCode::kConfigError);
}

class LiveBackendTest : public ::testing::Test {
 protected:
  void SetUp() override {
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      last_auth_ = req.get_header_value("Authorization");
      const auto body = json::parse(req.body);
      const auto prompt = body["messages"][0]["content"].get<std::string>();
      if (prompt == "deny") {
        res.status = 401;
        return;
      }
      if (prompt == "busy") {
        res.status = 503;
        return;
      }
      json out = {{"model", body["model"]},
                  {"choices", {{{"message", {{"role", "assistant"}, {"content", "echo " + prompt}}}}}},
                  {"usage", {{"prompt_tokens", 3}, {"completion_tokens", 2}}}};
      res.set_content(out.dump(), "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    setenv("CONVPLAN_TEST_KEY", "secret-value", 1);
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }

  ProviderConfig live() const {
    ProviderConfig c;
    c.kind = ProviderKind::kLive;
    c.endpoint = "http://127.0.0.1:" + std::to_string(port_) + "/v1";
    c.credential_env = "CONVPLAN_TEST_KEY";
    c.max_retries = 1;
    c.backoff_base = std::chrono::milliseconds(1);
    c.timeout = std::chrono::milliseconds(2000);
    return c;
  }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::string last_auth_;
};

TEST_F(LiveBackendTest, SendsBearerFromEnvironment) {
  Gateway gw(live());
  const auto r = gw.complete(ChatRequest::single("gpt-test", "ping"));
  EXPECT_EQ(r.text, "echo ping");
  EXPECT_EQ(r.usage.prompt, 3);
  EXPECT_EQ(last_auth_, "Bearer secret-value");
}

TEST_F(LiveBackendTest, MapsStatusCodes) {
  Gateway gw(live());
  EXPECT_CONVPLAN_ERROR(gw.complete(ChatRequest::single("m", "deny")), ErrorCode::kAuthError);
  EXPECT_CONVPLAN_ERROR(gw.complete(ChatRequest::single("m", "busy")),
                     ErrorCode::kProviderUnavailable);
}

TEST_F(LiveBackendTest, MissingCredentialIsAuthError) {
  auto c = live();
  c.credential_env = "CONVPLAN_TEST_KEY_THAT_IS_UNSET";
  EXPECT_CONVPLAN_ERROR(Gateway{c}, ErrorCode::kAuthError);
}

TEST(LiveBackend, UnreachableEndpointIsUnavailable) {
  ProviderConfig c;
  c.kind = ProviderKind::kLive;
  c.endpoint = "http://127.0.0.1:9";
  c.max_retries = 0;
  c.timeout = std::chrono::milliseconds(500);
  Gateway gw(c);
  try {
    gw.complete(ChatRequest::single("m", "x"));
    ADD_FAILURE() << "expected failure";
  } catch (const Error& e) {
    EXPECT_TRUE(e.code() == ErrorCode::kProviderUnavailable || e.code() == ErrorCode::kTimeout);
  }
}
