#pragma once

// Stage orchestration over a run directory. Every stage reads and writes JSONL
// files in the run directory and appends a provenance entry to manifest.jsonl:
//
//   forge      -> conversations.jsonl [vet.jsonl]
//   split      -> splits.jsonl
//   rewrite    -> rewrites.jsonl
//   plan       -> plans.jsonl
//   judge      -> preferences.jsonl [human_labels.jsonl]
//   metrics    -> metrics.jsonl
//   rank       -> ranks.jsonl
//   export-dpo -> dpo_train.jsonl judge_sft.jsonl export_summary.json
//   serve      -> annotation/tasks.jsonl, then blocks serving HTTP
//   report     -> report/*.csv report/*.svg report/summary.json
//
// A stage is skipped (cache hit) when its inputs, config hash and previous
// outputs are unchanged.

#include <atomic>
#include <exception>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "convplan/annotation.hpp"
#include "convplan/core.hpp"
#include "convplan/dpo.hpp"
#include "convplan/forge.hpp"
#include "convplan/gateway.hpp"
#include "convplan/rewriters.hpp"

namespace convplan {

struct JudgePair {
  std::string first;
  std::string second;
  /// Maximum number of conversations this pair is scheduled on (0 = all).
  std::size_t limit = 0;
};

struct RunConfig {
  /// Parsed config file; hashed (minus run_dir and workers) into config_hash.
  json raw;
  std::filesystem::path base_dir;
  std::filesystem::path run_dir;
  std::size_t workers = 1;

  std::uint64_t split_seed = 0;
  std::uint64_t shuffle_seed = 0;
  std::uint64_t in3_seed = 0;

  /// Keyed by role: generator, vet, rewriter, planner, judge, finetune, default.
  std::map<std::string, ProviderConfig> providers;

  std::string forge_source = "generate";  // generate | in3 | ingest
  std::vector<GenerationSpec> generation;
  std::filesystem::path forge_input;
  Topic in3_default_topic = Topic::kCooking;
  /// template (deterministic) | llm (uses the generator provider)
  std::string in3_mode = "template";
  std::string in3_model = "gpt-4o";
  bool vet = false;
  std::string vet_model = "gpt-4o";
  bool redact = true;

  SplitRatios split_ratios;
  std::optional<std::string> stratify;

  std::vector<RewriterSpec> rewriters;
  /// Restrict rewriting to one split (requires splits.jsonl).
  std::optional<Split> rewrite_split;

  std::string planner_model = "gpt-4o";

  std::string judge_mode = "model";  // model | human
  std::string judge_model = "gpt-4o";
  std::vector<JudgePair> judge_pairs;

  std::size_t ged_budget = 20000;
  std::size_t exact_threshold = 10;
  bool label_aware = false;
  json embedding = {{"kind", "synthetic"}};

  std::optional<Split> export_split;
  std::optional<FinetuneJobSpec> finetune;
  bool submit_finetune = false;

  std::filesystem::path annotation_dir;
  std::filesystem::path static_dir;
  std::set<std::string> annotators;
  std::size_t max_annotators_per_task = 3;
  std::string host = "127.0.0.1";
  int port = 8080;

  std::string config_hash;

  const ProviderConfig& provider(const std::string& role) const;
};

/// Relative paths in the config resolve against `base_dir`; run-directory
/// relative paths (caches, annotation dir) against run_dir. Throws ConfigError.
RunConfig run_config_from_json(const json& j, const std::filesystem::path& base_dir,
                               const std::optional<std::filesystem::path>& run_dir = {});
RunConfig load_run_config(const std::filesystem::path& path,
                          const std::optional<std::filesystem::path>& run_dir = {});

/// Canonical config hash, independent of run_dir and worker count.
std::string config_hash(const json& raw);

const std::vector<std::string>& stage_names();

struct StageOutcome {
  std::string command;
  bool cached = false;
  std::vector<std::string> outputs;
};

/// Runs one stage. Throws MissingStage / HashMismatch for absent or stale
/// inputs and propagates module errors.
StageOutcome run_stage(const std::string& command, const RunConfig& config);

/// forge, split, rewrite, plan, judge, metrics, rank, export-dpo, report.
std::vector<StageOutcome> run_all(const RunConfig& config);

/// Seeds annotation tasks from the run's plans and returns the opened store.
std::shared_ptr<AnnotationStore> prepare_annotation(const RunConfig& config);

/// 0 ok, 2 validation failure, 3 provider failure.
int exit_code_for(ErrorCode code);

/// Runs fn(i) for i in [0, n) on up to `workers` threads. If any call throws,
/// the exception from the lowest index is rethrown after all workers stop.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace convplan
