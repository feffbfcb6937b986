#pragma once

// Provider-agnostic chat completion with a request-hash response cache.
//
// Three provider kinds share one entry point:
//   live   - OpenAI-compatible HTTP chat-completions endpoint
//   replay - answers only from a recorded cache file; misses are errors
//   mock   - regex-over-prompt scripted responses for offline runs
// Any kind may carry a cache file; live + record persists every response.

#include <chrono>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "convplan/error.hpp"
#include "convplan/util.hpp"

namespace convplan {

enum class Role { kSystem, kUser, kAssistant };

std::string_view to_string(Role role);
Role parse_role(std::string_view s);

struct ChatMessage {
  Role role = Role::kUser;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::string model_id;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  std::optional<int> max_tokens;

  /// Convenience: one user message.
  static ChatRequest single(std::string model_id, std::string prompt, double temperature = 0.0);
};

struct TokenUsage {
  long prompt = 0;
  long completion = 0;
};

struct ChatResponse {
  std::string text;
  std::string model_id;
  TokenUsage usage;
  bool cached = false;
};

enum class ProviderKind { kLive, kReplay, kMock };

std::string_view to_string(ProviderKind kind);

struct MockRule {
  /// ECMAScript regex searched over the joined message contents.
  std::string pattern;
  /// Response text; `$1`, `$&` etc. expand to the match.
  std::string response;
  /// When set, the rule raises this error instead of responding.
  std::optional<ErrorCode> error;
  /// Literal substrings that must all occur for the rule to apply. Cheaper and
  /// safer than spanning the whole prompt with one regex.
  std::vector<std::string> contains;
  /// Raise `error` only for the first N hits, then respond normally (0 = always).
  int fail_times = 0;
};

struct ProviderConfig {
  std::string name = "default";
  ProviderKind kind = ProviderKind::kMock;
  std::string endpoint;
  /// Name of the environment variable holding the API key. Never the key.
  std::string credential_env;
  std::chrono::milliseconds timeout{30000};
  int max_retries = 3;
  std::chrono::milliseconds backoff_base{500};
  /// 0 disables rate limiting.
  double requests_per_minute = 0.0;
  bool cache_enabled = true;
  std::optional<std::filesystem::path> cache_path;
  std::vector<MockRule> rules;
  std::optional<std::string> default_response;

  /// Throws ConfigError on invalid settings.
  void validate() const;
};

/// Parses a provider block. Rejects inline secrets (keys such as "api_key").
ProviderConfig provider_config_from_json(const json& j);
json to_json(const ProviderConfig& config);

json to_json(const ChatRequest& request);
ChatRequest chat_request_from_json(const json& j);

/// Hash of model id, messages and temperature.
std::string request_cache_key(const ChatRequest& request);

/// Transport used by the gateway for non-cached calls.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  /// Throws Error(kTimeout | kProviderUnavailable) for retryable failures.
  virtual ChatResponse send(const ChatRequest& request) = 0;
};

std::unique_ptr<ChatBackend> make_backend(const ProviderConfig& config);

/// Thread-safe. Copies share cache, rate limiter and backend.
class Gateway {
 public:
  explicit Gateway(ProviderConfig config);
  Gateway(ProviderConfig config, std::shared_ptr<ChatBackend> backend);

  ChatResponse complete(const ChatRequest& request) const;

  const ProviderConfig& config() const;
  std::size_t cache_entries() const;

 private:
  struct State;
  std::shared_ptr<State> state_;
};

/// One-shot completion with a freshly constructed gateway.
ChatResponse complete(const ChatRequest& request, const ProviderConfig& config);

/// Wraps a live (or mock) config so that every response is persisted to
/// `cache_path`. Throws IoError if the path is not writable.
ProviderConfig record_run(const ProviderConfig& config, const std::filesystem::path& cache_path);

/// Config answering only from `cache_path`.
ProviderConfig replay_config(const std::filesystem::path& cache_path, std::string name = "replay");

}  // namespace convplan
