#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "convplan/pipeline.hpp"
#include "test_util.hpp"

using namespace convplan;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtureDir = fs::path(CONVPLAN_SOURCE_DIR) / "tests" / "fixtures" / "e2e";

json fixture_json() {
  std::ifstream in(kFixtureDir / "config.json");
  return json::parse(in, nullptr, true, true);
}

RunConfig fixture_config(const fs::path& run_dir, json j = fixture_json()) {
  return run_config_from_json(j, kFixtureDir, run_dir);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() == "manifest.jsonl") continue;
    if (e.path().string().find("annotation") != std::string::npos) continue;
    out[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return out;
}

}  // namespace

TEST(ConfigHash, IgnoresRunDirAndWorkers) {
  auto j = fixture_json();
  const auto h = config_hash(j);
  j["run_dir"] = "elsewhere";
  j["workers"] = 1;
  EXPECT_EQ(config_hash(j), h);
  j["seeds"]["shuffle"] = 24;
  EXPECT_NE(config_hash(j), h);
}

TEST(RunConfig, RejectsBadValues) {
  testutil::TempDir dir;
  auto j = fixture_json();
  j["judge"]["mode"] = "oracle";
  EXPECT_CONVPLAN_ERROR(fixture_config(dir.path(), j), ErrorCode::kConfigError);
  j = fixture_json();
  j["providers"]["default"]["api_key"] = "sk-live";
  EXPECT_CONVPLAN_ERROR(fixture_config(dir.path(), j), ErrorCode::kConfigError);
}

TEST(Pipeline, MissingUpstreamStage) {
  testutil::TempDir dir;
  const auto cfg = fixture_config(dir.path());
  EXPECT_CONVPLAN_ERROR(run_stage("metrics", cfg), ErrorCode::kMissingStage);
  EXPECT_CONVPLAN_ERROR(run_stage("bogus", cfg), ErrorCode::kInvalidArgument);
}

TEST(Pipeline, EndToEndCachedAndDeterministic) {
  testutil::TempDir a, b;
  const auto cfg = fixture_config(a.path());
  const auto first = run_all(cfg);
  for (const auto& o : first) EXPECT_FALSE(o.cached) << o.command;
  for (const auto* f : {"conversations.jsonl", "splits.jsonl", "rewrites.jsonl", "plans.jsonl",
                        "preferences.jsonl", "metrics.jsonl", "ranks.jsonl", "dpo_train.jsonl"}) {
    EXPECT_TRUE(fs::exists(a / f)) << f;
  }
  const auto before = snapshot(a.path());
  const auto second = run_all(cfg);
  for (const auto& o : second) EXPECT_TRUE(o.cached) << o.command;
  EXPECT_EQ(snapshot(a.path()), before);

  auto j = fixture_json();
  j["workers"] = 1;
  run_all(fixture_config(b.path(), j));
  EXPECT_EQ(snapshot(b.path()), before);
}

TEST(Pipeline, TamperedInputIsRefused) {
  testutil::TempDir dir;
  const auto cfg = fixture_config(dir.path());
  run_stage("forge", cfg);
  std::ofstream(dir / "conversations.jsonl", std::ios::app) << "\n";
  EXPECT_CONVPLAN_ERROR(run_stage("split", cfg), ErrorCode::kHashMismatch);
}

TEST(Pipeline, ReportRefusesMixedConfigs) {
  testutil::TempDir dir;
  run_all(fixture_config(dir.path()));
  auto j = fixture_json();
  j["metrics"]["label_aware"] = true;
  const auto changed = fixture_config(dir.path(), j);
  EXPECT_FALSE(run_stage("metrics", changed).cached);
  EXPECT_CONVPLAN_ERROR(run_stage("report", changed), ErrorCode::kHashMismatch);
}

TEST(Pipeline, ExitCodes) {
  EXPECT_EQ(exit_code_for(ErrorCode::kMissingStage), 2);
  EXPECT_EQ(exit_code_for(ErrorCode::kConfigError), 2);
  EXPECT_EQ(exit_code_for(ErrorCode::kCacheMiss), 3);
  EXPECT_EQ(exit_code_for(ErrorCode::kRewriteFailed), 3);
}

TEST(Pipeline, ParallelForRethrowsLowestIndex) {
  std::vector<int> hit(100, 0);
  parallel_for(hit.size(), 8, [&](std::size_t i) { hit[i] = 1; });
  EXPECT_EQ(std::count(hit.begin(), hit.end(), 1), 100);
  try {
    parallel_for(50, 4, [](std::size_t i) {
      if (i == 7 || i == 30) throw Error(ErrorCode::kIoError, std::to_string(i));
    });
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_STREQ(e.what(), "IoError: 7");
  }
}

TEST(Pipeline, AnnotationPreparedFromPlans) {
  testutil::TempDir dir;
  const auto cfg = fixture_config(dir.path());
  for (const auto* s : {"forge", "split", "rewrite", "plan"}) run_stage(s, cfg);
  const auto store = prepare_annotation(cfg);
  EXPECT_EQ(store->task_count(), 45u);
}
