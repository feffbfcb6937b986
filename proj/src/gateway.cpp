#include "convplan/gateway.hpp"

#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <map>
#include <mutex>
#include <regex>
#include <thread>

#include <spdlog/spdlog.h>

#include "http_util.hpp"

namespace convplan {

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string joined_prompt(const ChatRequest& request) {
  std::string out;
  for (std::size_t i = 0; i < request.messages.size(); ++i) {
    if (i > 0) out += "\n";
    out += request.messages[i].content;
  }
  return out;
}

bool retryable(ErrorCode code) {
  return code == ErrorCode::kTimeout || code == ErrorCode::kProviderUnavailable;
}

class ScriptedBackend final : public ChatBackend {
 public:
  explicit ScriptedBackend(const ProviderConfig& config) : default_(config.default_response) {
    for (const auto& rule : config.rules) {
      try {
        compiled_.push_back({std::regex(rule.pattern, std::regex::ECMAScript), rule, 0});
      } catch (const std::regex_error& e) {
        throw Error(ErrorCode::kConfigError,
                    "bad mock pattern '" + rule.pattern + "': " + e.what());
      }
    }
  }

  ChatResponse send(const ChatRequest& request) override {
    const auto prompt = joined_prompt(request);
    std::smatch m;
    std::lock_guard lock(mu_);
    for (auto& c : compiled_) {
      const auto& subs = c.rule.contains;
      if (std::any_of(subs.begin(), subs.end(),
                      [&](const std::string& s) { return prompt.find(s) == std::string::npos; })) {
        continue;
      }
      if (!std::regex_search(prompt, m, c.re)) continue;
      if (c.rule.error && (c.rule.fail_times == 0 || c.hits < c.rule.fail_times)) {
        ++c.hits;
        throw Error(*c.rule.error, "scripted failure for pattern '" + c.rule.pattern + "'");
      }
      return respond(request, m.format(c.rule.response));
    }
    if (default_) return respond(request, *default_);
    throw Error(ErrorCode::kProviderUnavailable, "no scripted response matches the prompt");
  }

 private:
  struct Compiled {
    std::regex re;
    MockRule rule;
    int hits;
  };

  static ChatResponse respond(const ChatRequest& request, std::string text) {
    ChatResponse r;
    r.model_id = request.model_id;
    r.usage.prompt = static_cast<long>(joined_prompt(request).size() / 4);
    r.usage.completion = static_cast<long>(text.size() / 4);
    r.text = std::move(text);
    return r;
  }

  std::mutex mu_;
  std::vector<Compiled> compiled_;
  std::optional<std::string> default_;
};

class ReplayOnlyBackend final : public ChatBackend {
 public:
  ChatResponse send(const ChatRequest& request) override {
    throw Error(ErrorCode::kCacheMiss, "request " + request_cache_key(request).substr(0, 12) +
                                           " is not in the replay cache");
  }
};

class OpenAiCompatibleBackend final : public ChatBackend {
 public:
  explicit OpenAiCompatibleBackend(const ProviderConfig& config)
      : target_(detail::parse_endpoint(config.endpoint)), timeout_(config.timeout) {
    if (!config.credential_env.empty()) {
      const char* key = std::getenv(config.credential_env.c_str());
      if (key == nullptr || *key == '\0') {
        throw Error(ErrorCode::kAuthError,
                    "environment variable " + config.credential_env + " is not set");
      }
      api_key_ = key;
    }
  }

  ChatResponse send(const ChatRequest& request) override {
    json body = {{"model", request.model_id}, {"temperature", request.temperature}};
    json messages = json::array();
    for (const auto& m : request.messages) {
      messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
    }
    body["messages"] = std::move(messages);
    if (request.max_tokens) body["max_tokens"] = *request.max_tokens;

    auto client = detail::make_client(target_, timeout_);
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    auto res = client->Post(target_.base_path + "/chat/completions", headers, body.dump(),
                            "application/json");
    if (!res) throw detail::transport_error(res.error(), "chat completion");
    if (res->status != 200) throw detail::status_error(res->status, res->body, "chat completion");

    auto parsed = json::parse(res->body, nullptr, false);
    if (parsed.is_discarded()) {
      throw Error(ErrorCode::kProviderUnavailable, "chat completion returned invalid JSON");
    }
    try {
      ChatResponse r;
      const auto& content = parsed.at("choices").at(0).at("message").at("content");
      r.text = content.is_null() ? std::string() : content.get<std::string>();
      r.model_id = parsed.value("model", request.model_id);
      if (parsed.contains("usage")) {
        r.usage.prompt = parsed["usage"].value("prompt_tokens", 0L);
        r.usage.completion = parsed["usage"].value("completion_tokens", 0L);
      }
      return r;
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kProviderUnavailable,
                  std::string("unexpected chat completion schema: ") + e.what());
    }
  }

 private:
  detail::HttpTarget target_;
  std::chrono::milliseconds timeout_;
  std::string api_key_;
};

class TokenBucket {
 public:
  explicit TokenBucket(double per_minute)
      : rate_per_sec_(per_minute / 60.0),
        capacity_(std::max(1.0, per_minute / 60.0)),
        tokens_(capacity_),
        last_(std::chrono::steady_clock::now()) {}

  void acquire() {
    if (rate_per_sec_ <= 0.0) return;
    std::unique_lock lock(mu_);
    for (;;) {
      const auto now = std::chrono::steady_clock::now();
      const double elapsed = std::chrono::duration<double>(now - last_).count();
      tokens_ = std::min(capacity_, tokens_ + elapsed * rate_per_sec_);
      last_ = now;
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      const double wait = (1.0 - tokens_) / rate_per_sec_;
      lock.unlock();
      std::this_thread::sleep_for(std::chrono::duration<double>(wait));
      lock.lock();
    }
  }

 private:
  std::mutex mu_;
  double rate_per_sec_;
  double capacity_;
  double tokens_;
  std::chrono::steady_clock::time_point last_;
};

class ResponseCache {
 public:
  explicit ResponseCache(std::optional<std::filesystem::path> path) : path_(std::move(path)) {
    if (!path_ || !std::filesystem::exists(*path_)) return;
    for (const auto& row : read_jsonl(*path_)) {
      entries_[row.at("key").get<std::string>()] = row.at("response");
    }
  }

  std::optional<ChatResponse> lookup(const std::string& key) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    ChatResponse r;
    r.text = it->second.at("text").get<std::string>();
    r.model_id = it->second.value("model_id", "");
    r.usage.prompt = it->second.value("prompt_tokens", 0L);
    r.usage.completion = it->second.value("completion_tokens", 0L);
    r.cached = true;
    return r;
  }

  void store(const std::string& key, const ChatRequest& request, const ChatResponse& response) {
    json resp = {{"text", response.text},
                 {"model_id", response.model_id},
                 {"prompt_tokens", response.usage.prompt},
                 {"completion_tokens", response.usage.completion}};
    std::lock_guard lock(mu_);
    if (!entries_.emplace(key, resp).second) return;
    if (!path_) return;
    json row = {{"key", key},
                {"request", to_json(request)},
                {"response", resp},
                {"timestamp", utc_timestamp()}};
    std::ofstream out(*path_, std::ios::app);
    if (!out) throw Error(ErrorCode::kIoError, "cannot append to cache " + path_->string());
    out << row.dump() << '\n';
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
  }

 private:
  mutable std::mutex mu_;
  std::optional<std::filesystem::path> path_;
  std::map<std::string, json> entries_;
};

}  // namespace

std::string_view to_string(Role role) {
  switch (role) {
    case Role::kSystem: return "system";
    case Role::kUser: return "user";
    case Role::kAssistant: return "assistant";
  }
  return "user";
}

Role parse_role(std::string_view s) {
  if (s == "system") return Role::kSystem;
  if (s == "user") return Role::kUser;
  if (s == "assistant") return Role::kAssistant;
  throw Error(ErrorCode::kSchemaError, "unknown role '" + std::string(s) + "'");
}

std::string_view to_string(ProviderKind kind) {
  switch (kind) {
    case ProviderKind::kLive: return "live";
    case ProviderKind::kReplay: return "replay";
    case ProviderKind::kMock: return "mock";
  }
  return "mock";
}

ChatRequest ChatRequest::single(std::string model_id, std::string prompt, double temperature) {
  ChatRequest r;
  r.model_id = std::move(model_id);
  r.messages.push_back({Role::kUser, std::move(prompt)});
  r.temperature = temperature;
  return r;
}

void ProviderConfig::validate() const {
  if (timeout.count() <= 0) throw Error(ErrorCode::kConfigError, name + ": timeout must be > 0");
  if (max_retries < 0) throw Error(ErrorCode::kConfigError, name + ": max_retries must be >= 0");
  if (requests_per_minute < 0) {
    throw Error(ErrorCode::kConfigError, name + ": requests_per_minute must be >= 0");
  }
  if (kind == ProviderKind::kLive && endpoint.empty()) {
    throw Error(ErrorCode::kConfigError, name + ": live provider needs an endpoint");
  }
  if (kind == ProviderKind::kReplay && !cache_path) {
    throw Error(ErrorCode::kConfigError, name + ": replay provider needs a cache_path");
  }
}

ProviderConfig provider_config_from_json(const json& j) {
  static const std::vector<std::string> kForbidden = {"api_key", "apikey", "key", "secret",
                                                      "token", "password"};
  for (const auto& k : kForbidden) {
    if (j.contains(k)) {
      throw Error(ErrorCode::kConfigError,
                  "provider config must not contain '" + k +
                      "'; reference an environment variable via credential_env");
    }
  }
  try {
    ProviderConfig c;
    c.name = j.value("name", std::string("default"));
    const auto kind = j.value("kind", std::string("mock"));
    if (kind == "live") {
      c.kind = ProviderKind::kLive;
    } else if (kind == "replay") {
      c.kind = ProviderKind::kReplay;
    } else if (kind == "mock") {
      c.kind = ProviderKind::kMock;
    } else {
      throw Error(ErrorCode::kConfigError, "unknown provider kind '" + kind + "'");
    }
    c.endpoint = j.value("endpoint", std::string());
    c.credential_env = j.value("credential_env", std::string());
    c.timeout = std::chrono::milliseconds(j.value("timeout_ms", 30000L));
    c.max_retries = j.value("max_retries", 3);
    c.backoff_base = std::chrono::milliseconds(j.value("backoff_ms", 500L));
    c.requests_per_minute = j.value("requests_per_minute", 0.0);
    c.cache_enabled = j.value("cache", true);
    if (j.contains("cache_path") && !j["cache_path"].is_null()) {
      c.cache_path = j["cache_path"].get<std::string>();
    }
    for (const auto& r : j.value("rules", json::array())) {
      MockRule rule;
      rule.pattern = r.at("pattern").get<std::string>();
      rule.response = r.value("response", std::string());
      if (r.contains("error")) {
        const auto e = r["error"].get<std::string>();
        if (e == "timeout") {
          rule.error = ErrorCode::kTimeout;
        } else if (e == "unavailable") {
          rule.error = ErrorCode::kProviderUnavailable;
        } else if (e == "auth") {
          rule.error = ErrorCode::kAuthError;
        } else {
          throw Error(ErrorCode::kConfigError, "unknown scripted error '" + e + "'");
        }
      }
      rule.fail_times = r.value("fail_times", 0);
      for (const auto& sub : r.value("contains", json::array())) {
        rule.contains.push_back(sub.get<std::string>());
      }
      c.rules.push_back(std::move(rule));
    }
    if (j.contains("default_response")) c.default_response = j["default_response"].get<std::string>();
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigError, std::string("provider config: ") + e.what());
  }
}

json to_json(const ProviderConfig& c) {
  json j = {{"name", c.name},
            {"kind", to_string(c.kind)},
            {"endpoint", c.endpoint},
            {"credential_env", c.credential_env},
            {"timeout_ms", c.timeout.count()},
            {"max_retries", c.max_retries},
            {"backoff_ms", c.backoff_base.count()},
            {"requests_per_minute", c.requests_per_minute},
            {"cache", c.cache_enabled}};
  j["cache_path"] = c.cache_path ? json(c.cache_path->string()) : json(nullptr);
  json rules = json::array();
  for (const auto& r : c.rules) {
    json rj = {{"pattern", r.pattern}, {"response", r.response}};
    if (r.error) {
      rj["error"] = *r.error == ErrorCode::kTimeout ? "timeout"
                    : *r.error == ErrorCode::kAuthError ? "auth"
                                                       : "unavailable";
      rj["fail_times"] = r.fail_times;
    }
    if (!r.contains.empty()) rj["contains"] = r.contains;
    rules.push_back(std::move(rj));
  }
  j["rules"] = std::move(rules);
  if (c.default_response) j["default_response"] = *c.default_response;
  return j;
}

json to_json(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  json j = {{"model_id", request.model_id},
            {"messages", std::move(messages)},
            {"temperature", request.temperature}};
  if (request.max_tokens) j["max_tokens"] = *request.max_tokens;
  return j;
}

ChatRequest chat_request_from_json(const json& j) {
  ChatRequest r;
  r.model_id = j.at("model_id").get<std::string>();
  for (const auto& m : j.at("messages")) {
    r.messages.push_back({parse_role(m.at("role").get<std::string>()),
                          m.at("content").get<std::string>()});
  }
  r.temperature = j.value("temperature", 0.0);
  if (j.contains("max_tokens")) r.max_tokens = j["max_tokens"].get<int>();
  return r;
}

std::string request_cache_key(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back(json::array({to_string(m.role), m.content}));
  }
  const json key = json::array({request.model_id, std::move(messages), request.temperature});
  return sha256_hex(key.dump());
}

std::unique_ptr<ChatBackend> make_backend(const ProviderConfig& config) {
  switch (config.kind) {
    case ProviderKind::kMock: return std::make_unique<ScriptedBackend>(config);
    case ProviderKind::kReplay: return std::make_unique<ReplayOnlyBackend>();
    case ProviderKind::kLive: return std::make_unique<OpenAiCompatibleBackend>(config);
  }
  throw Error(ErrorCode::kConfigError, "unknown provider kind");
}

struct Gateway::State {
  ProviderConfig config;
  std::shared_ptr<ChatBackend> backend;
  ResponseCache cache;
  TokenBucket bucket;

  State(ProviderConfig c, std::shared_ptr<ChatBackend> b)
      : config(std::move(c)),
        backend(std::move(b)),
        cache(config.cache_enabled ? config.cache_path : std::nullopt),
        bucket(config.requests_per_minute) {}
};

Gateway::Gateway(ProviderConfig config)
    : Gateway(config, std::shared_ptr<ChatBackend>(make_backend(config))) {}

Gateway::Gateway(ProviderConfig config, std::shared_ptr<ChatBackend> backend) {
  config.validate();
  if (config.kind == ProviderKind::kReplay && !std::filesystem::exists(*config.cache_path)) {
    throw Error(ErrorCode::kIoError, "replay cache " + config.cache_path->string() + " not found");
  }
  state_ = std::make_shared<State>(std::move(config), std::move(backend));
}

const ProviderConfig& Gateway::config() const { return state_->config; }

std::size_t Gateway::cache_entries() const { return state_->cache.size(); }

ChatResponse Gateway::complete(const ChatRequest& request) const {
  if (request.messages.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "chat request has no messages");
  }
  if (request.temperature < 0.0 || request.temperature > 2.0) {
    throw Error(ErrorCode::kInvalidArgument, "temperature must be in [0, 2]");
  }
  if (request.max_tokens && *request.max_tokens <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "max_tokens must be positive");
  }
  auto& s = *state_;
  const auto key = request_cache_key(request);
  const bool use_cache = s.config.cache_enabled || s.config.kind == ProviderKind::kReplay;
  if (use_cache) {
    if (auto hit = s.cache.lookup(key)) return *hit;
  }
  if (s.config.kind == ProviderKind::kReplay) {
    throw Error(ErrorCode::kCacheMiss, "request " + key.substr(0, 12) + " not in replay cache");
  }

  std::optional<Error> last;
  for (int attempt = 0; attempt <= s.config.max_retries; ++attempt) {
    if (attempt > 0) {
      const auto delay = s.config.backoff_base * (1 << std::min(attempt - 1, 10));
      spdlog::debug("{}: retry {} after {} ms", s.config.name, attempt, delay.count());
      std::this_thread::sleep_for(delay);
    }
    s.bucket.acquire();
    try {
      auto response = s.backend->send(request);
      response.cached = false;
      if (use_cache) s.cache.store(key, request, response);
      return response;
    } catch (const Error& e) {
      if (!retryable(e.code())) throw;
      last = e;
    }
  }
  if (last->code() == ErrorCode::kTimeout) {
    throw Error(ErrorCode::kTimeout, s.config.name + ": timed out after " +
                                         std::to_string(s.config.max_retries + 1) + " attempts");
  }
  throw Error(ErrorCode::kProviderUnavailable,
              s.config.name + ": unavailable after " + std::to_string(s.config.max_retries + 1) +
                  " attempts (" + last->what() + ")");
}

ChatResponse complete(const ChatRequest& request, const ProviderConfig& config) {
  return Gateway(config).complete(request);
}

ProviderConfig record_run(const ProviderConfig& config, const std::filesystem::path& cache_path) {
  if (config.kind == ProviderKind::kReplay) {
    throw Error(ErrorCode::kConfigError, "cannot record from a replay provider");
  }
  if (cache_path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(cache_path.parent_path(), ec);
  }
  {
    std::ofstream probe(cache_path, std::ios::app);
    if (!probe) throw Error(ErrorCode::kIoError, "cache path not writable: " + cache_path.string());
  }
  ProviderConfig out = config;
  out.cache_enabled = true;
  out.cache_path = cache_path;
  return out;
}

ProviderConfig replay_config(const std::filesystem::path& cache_path, std::string name) {
  ProviderConfig c;
  c.name = std::move(name);
  c.kind = ProviderKind::kReplay;
  c.cache_path = cache_path;
  return c;
}

}  // namespace convplan
