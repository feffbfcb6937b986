#pragma once

// Preference tracing and fine-tuning file export: DPO pairs for the rewriter,
// supervised examples for the judge, and fine-tuning job submission.

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "convplan/core.hpp"
#include "convplan/gateway.hpp"
#include "convplan/plan.hpp"
#include "convplan/preference.hpp"

namespace convplan {

enum class LabelSource { kHumanMajority, kModelJudge };

std::string_view to_string(LabelSource s);
LabelSource parse_label_source(std::string_view s);

struct DpoPair {
  std::string prompt;
  std::string preferred_output;
  std::string non_preferred_output;
  std::string conversation_id;
  std::string preferred_rewriter;
  std::string non_preferred_rewriter;
  LabelSource label_source = LabelSource::kModelJudge;
};

/// The part of a pair that survives the provider file format.
struct DpoExample {
  std::string prompt;
  std::string preferred_output;
  std::string non_preferred_output;

  bool operator==(const DpoExample&) const = default;
};

/// (conversation id, rewriter id) -> rewrite.
using RewriteStore = std::map<std::pair<std::string, std::string>, Rewrite>;
using PlanStore = std::map<std::pair<std::string, std::string>, Plan>;

RewriteStore make_rewrite_store(const std::vector<Rewrite>& rewrites);
PlanStore make_plan_store(const std::vector<Plan>& plans);

struct TraceResult {
  std::vector<DpoPair> pairs;
  std::size_t skipped_ties = 0;
  std::size_t dangling = 0;
};

/// Prompt for the rewriter being trained, rendered over the verbatim dialogue.
std::string render_dpo_prompt(const Conversation& conversation);

/// One pair per non-TIE record. A record whose plan or rewrite cannot be found
/// throws DanglingReference when `strict`, otherwise it is counted and skipped.
/// `plans` may be null to skip the plan check.
TraceResult trace_preferences(const std::vector<PreferenceRecord>& records,
                              const RewriteStore& rewrites,
                              const std::map<std::string, Conversation>& conversations,
                              const PlanStore* plans, LabelSource source, bool strict = true);

struct FileSummary {
  std::filesystem::path path;
  std::size_t lines = 0;
  std::string sha256;
};

json dpo_example_json(const DpoExample& example);
DpoExample dpo_example_from_json(const json& j);

/// Throws EmptyPairs, IoError.
FileSummary export_dpo_file(const std::vector<DpoPair>& pairs, const std::filesystem::path& path);
FileSummary export_dpo_examples(const std::vector<DpoExample>& examples,
                                const std::filesystem::path& path);
std::vector<DpoExample> parse_dpo_file(const std::filesystem::path& path);

struct SftExample {
  std::string prompt;
  Verdict target = Verdict::kTie;

  bool operator==(const SftExample&) const = default;
};

/// Judge prompts with plans in the record's original slot order, target = verdict.
/// Throws DanglingReference when a conversation or plan is missing.
std::vector<SftExample> build_judge_sft(const std::vector<PreferenceRecord>& resolved,
                                        const std::map<std::string, Conversation>& conversations,
                                        const PlanStore& plans,
                                        const Rubric& rubric = Rubric::standard());

json sft_example_json(const SftExample& example);
SftExample sft_example_from_json(const json& j);

FileSummary export_judge_sft_file(const std::vector<SftExample>& examples,
                                  const std::filesystem::path& path);
std::vector<SftExample> parse_sft_file(const std::filesystem::path& path);

enum class FinetuneKind { kDpo, kSft };

std::string_view to_string(FinetuneKind k);

struct FinetuneJobSpec {
  FinetuneKind kind = FinetuneKind::kDpo;
  std::filesystem::path training_file;
  std::string base_model = "gpt-4o-2024-08-06";
  double beta = 0.1;
  int epochs = 3;
  /// nullopt is the provider's "auto".
  std::optional<int> batch_size;
  std::optional<double> learning_rate_multiplier;
  std::string suffix;

  /// Throws ConfigError unless beta > 0 and epochs >= 1.
  void validate() const;
};

FinetuneJobSpec finetune_spec_from_json(const json& j);

/// Job creation body. `file_id` is the provider's id for the uploaded file.
json finetune_request_body(const FinetuneJobSpec& spec, const std::string& file_id);

/// Checks every line of a training file against the kind's schema.
/// Throws ValidationRejected naming the first bad line.
void validate_training_file(const std::filesystem::path& path, FinetuneKind kind);

struct JobStatus {
  std::string job_id;
  std::string status;
  std::optional<std::string> fine_tuned_model;

  bool terminal() const;
};

class FinetuneClient {
 public:
  virtual ~FinetuneClient() = default;
  virtual std::string upload_file(const std::filesystem::path& path) = 0;
  virtual std::string create_job(const json& body) = 0;
  virtual JobStatus job_status(const std::string& job_id) = 0;
};

/// Offline client: ids file-N / job-N; each poll advances queued -> running -> succeeded.
class MockFinetuneClient : public FinetuneClient {
 public:
  explicit MockFinetuneClient(std::vector<std::string> status_flow = {"queued", "running",
                                                                      "succeeded"});
  std::string upload_file(const std::filesystem::path& path) override;
  std::string create_job(const json& body) override;
  JobStatus job_status(const std::string& job_id) override;

  const std::vector<json>& submitted() const { return submitted_; }

 private:
  std::vector<std::string> flow_;
  std::map<std::string, std::size_t> polls_;
  std::vector<json> submitted_;
  int files_ = 0;
};

/// OpenAI-compatible files + fine_tuning/jobs endpoints, keyed via the
/// provider's credential environment variable.
class HttpFinetuneClient : public FinetuneClient {
 public:
  explicit HttpFinetuneClient(ProviderConfig config);
  std::string upload_file(const std::filesystem::path& path) override;
  std::string create_job(const json& body) override;
  JobStatus job_status(const std::string& job_id) override;

 private:
  ProviderConfig config_;
};

std::unique_ptr<FinetuneClient> make_finetune_client(const ProviderConfig& config);

struct JobRef {
  std::string job_id;
  std::string file_id;
  JobStatus status;
};

/// Validates the training file locally, uploads it and creates the job.
JobRef submit_finetune(const FinetuneJobSpec& spec, FinetuneClient& client);

/// Polls until a terminal status or `max_polls` is reached.
JobStatus poll_finetune(FinetuneClient& client, const std::string& job_id,
                        std::chrono::milliseconds interval, int max_polls = 1000);

}  // namespace convplan
