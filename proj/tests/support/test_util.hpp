#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "convplan/core.hpp"
#include "convplan/error.hpp"
#include "convplan/gateway.hpp"
#include "convplan/rewriters.hpp"

#define EXPECT_CONVPLAN_ERROR(stmt, expected_code)                                       \
  do {                                                                                \
    try {                                                                             \
      stmt;                                                                           \
      ADD_FAILURE() << "expected " << convplan::error_code_name(expected_code);          \
    } catch (const convplan::Error& e__) {                                               \
      EXPECT_EQ(e__.code(), expected_code) << e__.what();                             \
    }                                                                                 \
  } while (0)

namespace testutil {

inline convplan::Conversation conversation(const std::vector<std::string>& lines,
                                        convplan::Challenge challenge = convplan::Challenge::kPerfectIntent,
                                        convplan::Topic topic = convplan::Topic::kCooking) {
  convplan::Conversation c;
  c.topic = topic;
  c.challenge = challenge;
  std::string text;
  for (const auto& l : lines) text += l + "\n";
  c.turns = convplan::parse_dialogue(text);
  c.length_class = convplan::classify_length(c);
  return convplan::with_content_id(std::move(c));
}

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("convplan-test-" + std::to_string(rd()) + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline convplan::ProviderConfig mock(std::vector<convplan::MockRule> rules,
                                  std::optional<std::string> fallback = std::nullopt) {
  convplan::ProviderConfig c;
  c.kind = convplan::ProviderKind::kMock;
  c.rules = std::move(rules);
  c.default_response = std::move(fallback);
  c.backoff_base = std::chrono::milliseconds(1);
  return c;
}

}  // namespace testutil
