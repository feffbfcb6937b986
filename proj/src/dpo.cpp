#include "convplan/dpo.hpp"

#include <thread>

#include <spdlog/spdlog.h>

#include "http_util.hpp"
#include "convplan/error.hpp"
#include "convplan/prompts.hpp"
#include "convplan/rewriters.hpp"

namespace convplan {

std::string_view to_string(LabelSource s) {
  return s == LabelSource::kHumanMajority ? "human_majority" : "model_judge";
}

LabelSource parse_label_source(std::string_view s) {
  if (s == "human_majority" || s == "human") return LabelSource::kHumanMajority;
  if (s == "model_judge" || s == "model") return LabelSource::kModelJudge;
  throw Error(ErrorCode::kConfigError, "unknown label source '" + std::string(s) + "'");
}

RewriteStore make_rewrite_store(const std::vector<Rewrite>& rewrites) {
  RewriteStore store;
  for (const auto& r : rewrites) store[{r.conversation_id, r.rewriter_id}] = r;
  return store;
}

PlanStore make_plan_store(const std::vector<Plan>& plans) {
  PlanStore store;
  for (const auto& p : plans) store[{p.conversation_id, p.rewriter_id}] = p;
  return store;
}

std::string render_dpo_prompt(const Conversation& conversation) {
  return prompts::render(prompts::kTunedRewriteTemplate,
                         {{"conversation", serialize_dialogue(conversation)}});
}

TraceResult trace_preferences(const std::vector<PreferenceRecord>& records,
                              const RewriteStore& rewrites,
                              const std::map<std::string, Conversation>& conversations,
                              const PlanStore* plans, LabelSource source, bool strict) {
  TraceResult out;
  for (const auto& rec : records) {
    if (rec.is_tie()) {
      ++out.skipped_ties;
      continue;
    }
    const auto& cid = rec.presentation.conversation_id;
    const auto winner = *rec.winner;
    const auto loser = *rec.loser();
    std::string missing;
    auto conv = conversations.find(cid);
    auto win = rewrites.find({cid, winner});
    auto lose = rewrites.find({cid, loser});
    if (conv == conversations.end()) {
      missing = "conversation " + cid;
    } else if (plans != nullptr && !plans->count({cid, winner})) {
      missing = "plan " + cid + "/" + winner;
    } else if (plans != nullptr && !plans->count({cid, loser})) {
      missing = "plan " + cid + "/" + loser;
    } else if (win == rewrites.end()) {
      missing = "rewrite " + cid + "/" + winner;
    } else if (lose == rewrites.end()) {
      missing = "rewrite " + cid + "/" + loser;
    }
    if (!missing.empty()) {
      if (strict) throw Error(ErrorCode::kDanglingReference, "no stored " + missing);
      spdlog::warn("skipping preference record: no stored {}", missing);
      ++out.dangling;
      continue;
    }
    out.pairs.push_back(DpoPair{render_dpo_prompt(conv->second), win->second.text,
                                lose->second.text, cid, winner, loser, source});
  }
  return out;
}

namespace {

json message(std::string_view role, const std::string& content) {
  return {{"role", role}, {"content", content}};
}

std::string single_content(const json& messages, std::string_view role, const char* what) {
  if (!messages.is_array() || messages.size() != 1 || messages[0].at("role") != role) {
    throw Error(ErrorCode::kSchemaError, std::string(what) + " must hold one " +
                                             std::string(role) + " message");
  }
  return messages[0].at("content").get<std::string>();
}

FileSummary write_rows(const std::vector<json>& rows, const std::filesystem::path& path) {
  const auto text = to_jsonl(rows);
  write_file(path, text);
  return FileSummary{path, rows.size(), sha256_hex(text)};
}

}  // namespace

json dpo_example_json(const DpoExample& e) {
  return {{"input", {{"messages", json::array({message("user", e.prompt)})}}},
          {"preferred_output", json::array({message("assistant", e.preferred_output)})},
          {"non_preferred_output", json::array({message("assistant", e.non_preferred_output)})}};
}

DpoExample dpo_example_from_json(const json& j) {
  try {
    return DpoExample{single_content(j.at("input").at("messages"), "user", "input.messages"),
                      single_content(j.at("preferred_output"), "assistant", "preferred_output"),
                      single_content(j.at("non_preferred_output"), "assistant",
                                     "non_preferred_output")};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaError, std::string("dpo example: ") + e.what());
  }
}

FileSummary export_dpo_examples(const std::vector<DpoExample>& examples,
                                const std::filesystem::path& path) {
  if (examples.empty()) throw Error(ErrorCode::kEmptyPairs, "no preference pairs to export");
  std::vector<json> rows;
  rows.reserve(examples.size());
  for (const auto& e : examples) rows.push_back(dpo_example_json(e));
  return write_rows(rows, path);
}

FileSummary export_dpo_file(const std::vector<DpoPair>& pairs, const std::filesystem::path& path) {
  std::vector<DpoExample> examples;
  examples.reserve(pairs.size());
  for (const auto& p : pairs) {
    examples.push_back({p.prompt, p.preferred_output, p.non_preferred_output});
  }
  return export_dpo_examples(examples, path);
}

std::vector<DpoExample> parse_dpo_file(const std::filesystem::path& path) {
  std::vector<DpoExample> out;
  for (const auto& row : read_jsonl(path)) out.push_back(dpo_example_from_json(row));
  return out;
}

std::vector<SftExample> build_judge_sft(const std::vector<PreferenceRecord>& resolved,
                                        const std::map<std::string, Conversation>& conversations,
                                        const PlanStore& plans, const Rubric& rubric) {
  std::vector<SftExample> out;
  for (const auto& rec : resolved) {
    const auto& p = rec.presentation;
    auto conv = conversations.find(p.conversation_id);
    auto a = plans.find({p.conversation_id, p.slot_a});
    auto b = plans.find({p.conversation_id, p.slot_b});
    if (conv == conversations.end() || a == plans.end() || b == plans.end()) {
      throw Error(ErrorCode::kDanglingReference,
                  "cannot build judge example for " + p.key() + ": missing conversation or plan");
    }
    out.push_back({render_judge_prompt(conv->second, a->second, b->second, rubric), rec.verdict});
  }
  return out;
}

json sft_example_json(const SftExample& e) {
  return {{"messages", json::array({message("user", e.prompt),
                                    message("assistant", std::string(to_string(e.target)))})}};
}

SftExample sft_example_from_json(const json& j) {
  try {
    const auto& m = j.at("messages");
    if (!m.is_array() || m.size() != 2 || m[0].at("role") != "user" ||
        m[1].at("role") != "assistant") {
      throw Error(ErrorCode::kSchemaError, "sft example must hold a user then assistant message");
    }
    return {m[0].at("content").get<std::string>(),
            parse_verdict_name(m[1].at("content").get<std::string>())};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaError, std::string("sft example: ") + e.what());
  }
}

FileSummary export_judge_sft_file(const std::vector<SftExample>& examples,
                                  const std::filesystem::path& path) {
  std::vector<json> rows;
  rows.reserve(examples.size());
  for (const auto& e : examples) rows.push_back(sft_example_json(e));
  return write_rows(rows, path);
}

std::vector<SftExample> parse_sft_file(const std::filesystem::path& path) {
  std::vector<SftExample> out;
  for (const auto& row : read_jsonl(path)) out.push_back(sft_example_from_json(row));
  return out;
}

std::string_view to_string(FinetuneKind k) { return k == FinetuneKind::kDpo ? "dpo" : "sft"; }

void FinetuneJobSpec::validate() const {
  if (!(beta > 0.0)) throw Error(ErrorCode::kConfigError, "beta must be positive");
  if (epochs < 1) throw Error(ErrorCode::kConfigError, "epochs must be at least 1");
  if (batch_size && *batch_size < 1) throw Error(ErrorCode::kConfigError, "batch_size must be >= 1");
  if (learning_rate_multiplier && !(*learning_rate_multiplier > 0.0)) {
    throw Error(ErrorCode::kConfigError, "learning_rate_multiplier must be positive");
  }
  if (base_model.empty()) throw Error(ErrorCode::kConfigError, "base_model is empty");
}

FinetuneJobSpec finetune_spec_from_json(const json& j) {
  FinetuneJobSpec s;
  try {
    if (j.contains("kind")) {
      const auto k = j["kind"].get<std::string>();
      if (k == "dpo") s.kind = FinetuneKind::kDpo;
      else if (k == "sft") s.kind = FinetuneKind::kSft;
      else throw Error(ErrorCode::kConfigError, "unknown fine-tune kind '" + k + "'");
    }
    if (j.contains("training_file")) s.training_file = j["training_file"].get<std::string>();
    s.base_model = j.value("base_model", s.base_model);
    s.beta = j.value("beta", s.beta);
    s.epochs = j.value("epochs", s.epochs);
    auto auto_or = [&](const char* key, auto& field) {
      if (!j.contains(key) || (j[key].is_string() && j[key] == "auto")) return;
      field = j[key].get<typename std::decay_t<decltype(field)>::value_type>();
    };
    auto_or("batch_size", s.batch_size);
    auto_or("learning_rate_multiplier", s.learning_rate_multiplier);
    s.suffix = j.value("suffix", s.suffix);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigError, std::string("finetune spec: ") + e.what());
  }
  s.validate();
  return s;
}

json finetune_request_body(const FinetuneJobSpec& spec, const std::string& file_id) {
  spec.validate();
  json hp = {{"n_epochs", spec.epochs},
             {"batch_size", spec.batch_size ? json(*spec.batch_size) : json("auto")},
             {"learning_rate_multiplier",
              spec.learning_rate_multiplier ? json(*spec.learning_rate_multiplier) : json("auto")}};
  json method;
  if (spec.kind == FinetuneKind::kDpo) {
    hp["beta"] = spec.beta;
    method = {{"type", "dpo"}, {"dpo", {{"hyperparameters", hp}}}};
  } else {
    method = {{"type", "supervised"}, {"supervised", {{"hyperparameters", hp}}}};
  }
  json body = {{"model", spec.base_model}, {"training_file", file_id}, {"method", method}};
  if (!spec.suffix.empty()) body["suffix"] = spec.suffix;
  return body;
}

void validate_training_file(const std::filesystem::path& path, FinetuneKind kind) {
  std::vector<json> rows;
  try {
    rows = read_jsonl(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::kValidationRejected, e.what(), e.code());
  }
  if (rows.empty()) throw Error(ErrorCode::kValidationRejected, path.string() + " has no examples");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    try {
      if (kind == FinetuneKind::kDpo) dpo_example_from_json(rows[i]);
      else sft_example_from_json(rows[i]);
    } catch (const Error& e) {
      throw Error(ErrorCode::kValidationRejected,
                  path.string() + " line " + std::to_string(i + 1) + ": " + e.what(), e.code());
    }
  }
}

bool JobStatus::terminal() const {
  return status == "succeeded" || status == "failed" || status == "cancelled";
}

MockFinetuneClient::MockFinetuneClient(std::vector<std::string> status_flow)
    : flow_(std::move(status_flow)) {
  if (flow_.empty()) flow_ = {"succeeded"};
}

std::string MockFinetuneClient::upload_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw Error(ErrorCode::kIoError, "no such training file: " + path.string());
  }
  return "file-" + std::to_string(++files_);
}

std::string MockFinetuneClient::create_job(const json& body) {
  submitted_.push_back(body);
  const auto id = "job-" + std::to_string(submitted_.size());
  polls_[id] = 0;
  return id;
}

JobStatus MockFinetuneClient::job_status(const std::string& job_id) {
  auto it = polls_.find(job_id);
  if (it == polls_.end()) throw Error(ErrorCode::kInvalidArgument, "unknown job " + job_id);
  const auto idx = std::min(it->second++, flow_.size() - 1);
  JobStatus s{job_id, flow_[idx], std::nullopt};
  if (s.status == "succeeded") s.fine_tuned_model = "ft:" + job_id;
  return s;
}

HttpFinetuneClient::HttpFinetuneClient(ProviderConfig config) : config_(std::move(config)) {
  config_.validate();
  if (config_.endpoint.empty()) {
    throw Error(ErrorCode::kConfigError, "fine-tune provider needs an endpoint");
  }
}

namespace {

json parse_body(const httplib::Result& res, const char* what) {
  if (!res) throw detail::transport_error(res.error(), what);
  if (res->status < 200 || res->status >= 300) {
    throw detail::status_error(res->status, res->body, what);
  }
  auto body = json::parse(res->body, nullptr, false);
  if (body.is_discarded() || !body.contains("id")) {
    throw Error(ErrorCode::kProviderUnavailable, std::string(what) + ": unexpected response body");
  }
  return body;
}

}  // namespace

std::string HttpFinetuneClient::upload_file(const std::filesystem::path& path) {
  const auto target = detail::parse_endpoint(config_.endpoint);
  auto client = detail::make_client(target, config_.timeout);
  httplib::MultipartFormDataItems items{
      {"purpose", "fine-tune", "", ""},
      {"file", read_file(path), path.filename().string(), "application/jsonl"}};
  auto res = client->Post(target.base_path + "/files", detail::auth_headers(config_.credential_env),
                          items);
  return parse_body(res, "file upload")["id"].get<std::string>();
}

std::string HttpFinetuneClient::create_job(const json& body) {
  const auto target = detail::parse_endpoint(config_.endpoint);
  auto client = detail::make_client(target, config_.timeout);
  auto res = client->Post(target.base_path + "/fine_tuning/jobs",
                          detail::auth_headers(config_.credential_env), body.dump(),
                          "application/json");
  return parse_body(res, "fine-tune job creation")["id"].get<std::string>();
}

JobStatus HttpFinetuneClient::job_status(const std::string& job_id) {
  const auto target = detail::parse_endpoint(config_.endpoint);
  auto client = detail::make_client(target, config_.timeout);
  auto res = client->Get(target.base_path + "/fine_tuning/jobs/" + job_id,
                         detail::auth_headers(config_.credential_env));
  const auto body = parse_body(res, "fine-tune job status");
  JobStatus s{job_id, body.value("status", std::string("unknown")), std::nullopt};
  if (body.contains("fine_tuned_model") && body["fine_tuned_model"].is_string()) {
    s.fine_tuned_model = body["fine_tuned_model"].get<std::string>();
  }
  return s;
}

std::unique_ptr<FinetuneClient> make_finetune_client(const ProviderConfig& config) {
  if (config.kind == ProviderKind::kLive) return std::make_unique<HttpFinetuneClient>(config);
  return std::make_unique<MockFinetuneClient>();
}

JobRef submit_finetune(const FinetuneJobSpec& spec, FinetuneClient& client) {
  spec.validate();
  validate_training_file(spec.training_file, spec.kind);
  JobRef ref;
  ref.file_id = client.upload_file(spec.training_file);
  ref.job_id = client.create_job(finetune_request_body(spec, ref.file_id));
  ref.status = JobStatus{ref.job_id, "queued", std::nullopt};
  spdlog::info("submitted {} fine-tune job {} (file {})", to_string(spec.kind), ref.job_id,
               ref.file_id);
  return ref;
}

JobStatus poll_finetune(FinetuneClient& client, const std::string& job_id,
                        std::chrono::milliseconds interval, int max_polls) {
  JobStatus s;
  for (int i = 0; i < max_polls; ++i) {
    s = client.job_status(job_id);
    if (s.terminal()) return s;
    std::this_thread::sleep_for(interval);
  }
  return s;
}

}  // namespace convplan
