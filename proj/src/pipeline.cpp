#include "convplan/pipeline.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <mutex>

#include <spdlog/spdlog.h>

#include "convplan/error.hpp"
#include "convplan/ged.hpp"
#include "convplan/plan.hpp"
#include "convplan/preference.hpp"
#include "convplan/report.hpp"
#include "convplan/semantic.hpp"

namespace fs = std::filesystem;

namespace convplan {

namespace {

constexpr const char* kConversations = "conversations.jsonl";
constexpr const char* kVet = "vet.jsonl";
constexpr const char* kSplits = "splits.jsonl";
constexpr const char* kRewrites = "rewrites.jsonl";
constexpr const char* kPlans = "plans.jsonl";
constexpr const char* kPreferences = "preferences.jsonl";
constexpr const char* kHumanLabels = "human_labels.jsonl";
constexpr const char* kMetrics = "metrics.jsonl";
constexpr const char* kRanks = "ranks.jsonl";
constexpr const char* kDpo = "dpo_train.jsonl";
constexpr const char* kSft = "judge_sft.jsonl";
constexpr const char* kExportSummary = "export_summary.json";
constexpr const char* kFinetuneJobs = "finetune_jobs.jsonl";
constexpr const char* kManifest = "manifest.jsonl";

fs::path resolve(const fs::path& base, const fs::path& p) {
  return p.is_absolute() ? p : base / p;
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key) || j[key].is_null()) return fallback;
  return j[key].get<T>();
}

}  // namespace

const ProviderConfig& RunConfig::provider(const std::string& role) const {
  if (auto it = providers.find(role); it != providers.end()) return it->second;
  if (auto it = providers.find("default"); it != providers.end()) return it->second;
  throw Error(ErrorCode::kConfigError, "no provider configured for role '" + role + "'");
}

std::string config_hash(const json& raw) {
  json canonical = raw;
  if (canonical.is_object()) {
    canonical.erase("run_dir");
    canonical.erase("workers");
  }
  return sha256_hex(canonical.dump());
}

RunConfig run_config_from_json(const json& j, const fs::path& base_dir,
                               const std::optional<fs::path>& run_dir) {
  if (!j.is_object()) throw Error(ErrorCode::kConfigError, "config must be a JSON object");
  RunConfig c;
  c.raw = j;
  c.base_dir = base_dir;
  try {
    if (run_dir) {
      c.run_dir = *run_dir;
    } else if (j.contains("run_dir")) {
      c.run_dir = resolve(base_dir, j["run_dir"].get<std::string>());
    } else {
      throw Error(ErrorCode::kConfigError, "no run directory: set run_dir or pass --run-dir");
    }
    c.workers = get_or<std::size_t>(j, "workers", 1);
    if (c.workers == 0) throw Error(ErrorCode::kConfigError, "workers must be at least 1");

    const json seeds = j.value("seeds", json::object());
    c.split_seed = get_or<std::uint64_t>(seeds, "split", 0);
    c.shuffle_seed = get_or<std::uint64_t>(seeds, "shuffle", 0);
    c.in3_seed = get_or<std::uint64_t>(seeds, "in3", 0);

    const json providers = j.value("providers", json::object());
    for (const auto& [role, pj] : providers.items()) {
      auto pc = provider_config_from_json(pj);
      if (pc.name == "default" && role != "default") pc.name = role;
      if (pc.cache_path) pc.cache_path = resolve(base_dir, *pc.cache_path);
      pc.validate();
      c.providers.emplace(role, std::move(pc));
    }

    const json forge = j.value("forge", json::object());
    c.forge_source = get_or<std::string>(forge, "source", "generate");
    if (c.forge_source != "generate" && c.forge_source != "in3" && c.forge_source != "ingest") {
      throw Error(ErrorCode::kConfigError, "forge.source must be generate, in3 or ingest");
    }
    for (const auto& s : forge.value("specs", json::array())) {
      c.generation.push_back(generation_spec_from_json(s));
    }
    if (forge.contains("input")) c.forge_input = resolve(base_dir, forge["input"].get<std::string>());
    if (c.forge_source != "generate" && c.forge_input.empty()) {
      throw Error(ErrorCode::kConfigError, "forge.input is required for source " + c.forge_source);
    }
    if (forge.contains("default_topic")) {
      c.in3_default_topic = parse_topic(forge["default_topic"].get<std::string>());
    }
    c.in3_mode = get_or<std::string>(forge, "in3_mode", c.in3_mode);
    if (c.in3_mode != "template" && c.in3_mode != "llm") {
      throw Error(ErrorCode::kConfigError, "forge.in3_mode must be template or llm");
    }
    c.in3_model = get_or<std::string>(forge, "in3_model", c.in3_model);
    c.vet = get_or<bool>(forge, "vet", false);
    c.vet_model = get_or<std::string>(forge, "vet_model", c.vet_model);
    c.redact = get_or<bool>(forge, "redact", true);

    const json split = j.value("split", json::object());
    if (split.contains("ratios")) {
      const auto& r = split["ratios"];
      if (!r.is_array() || r.size() != 3) {
        throw Error(ErrorCode::kConfigError, "split.ratios must hold three numbers");
      }
      c.split_ratios = {r[0].get<double>(), r[1].get<double>(), r[2].get<double>()};
    }
    if (split.contains("stratify") && !split["stratify"].is_null()) {
      c.stratify = split["stratify"].get<std::string>();
      if (*c.stratify != "challenge" && *c.stratify != "topic" && *c.stratify != "length") {
        throw Error(ErrorCode::kConfigError, "split.stratify must be challenge, topic or length");
      }
    }

    std::set<std::string> ids;
    for (const auto& r : j.value("rewriters", json::array())) {
      auto spec = rewriter_spec_from_json(r);
      if (!ids.insert(spec.rewriter_id).second) {
        throw Error(ErrorCode::kConfigError, "duplicate rewriter id '" + spec.rewriter_id + "'");
      }
      c.rewriters.push_back(std::move(spec));
    }
    if (j.contains("rewrite_split") && !j["rewrite_split"].is_null()) {
      c.rewrite_split = parse_split(j["rewrite_split"].get<std::string>());
    }

    c.planner_model = get_or<std::string>(j, "planner_model", c.planner_model);

    const json judge = j.value("judge", json::object());
    c.judge_mode = get_or<std::string>(judge, "mode", "model");
    if (c.judge_mode != "model" && c.judge_mode != "human") {
      throw Error(ErrorCode::kConfigError, "judge.mode must be model or human");
    }
    c.judge_model = get_or<std::string>(judge, "model", c.judge_model);
    if (judge.contains("pairs")) {
      for (const auto& p : judge["pairs"]) {
        JudgePair jp;
        const json& pair = p.is_object() ? p.at("pair") : p;
        if (!pair.is_array() || pair.size() != 2) {
          throw Error(ErrorCode::kConfigError, "judge pair must name two rewriters");
        }
        jp.first = pair[0].get<std::string>();
        jp.second = pair[1].get<std::string>();
        if (p.is_object()) jp.limit = get_or<std::size_t>(p, "limit", 0);
        for (const auto* id : {&jp.first, &jp.second}) {
          if (!ids.count(*id)) {
            throw Error(ErrorCode::kConfigError, "judge pair names unknown rewriter '" + *id + "'");
          }
        }
        if (jp.first == jp.second) {
          throw Error(ErrorCode::kConfigError, "judge pair compares " + jp.first + " to itself");
        }
        c.judge_pairs.push_back(std::move(jp));
      }
    } else {
      for (std::size_t a = 0; a < c.rewriters.size(); ++a) {
        for (std::size_t b = a + 1; b < c.rewriters.size(); ++b) {
          c.judge_pairs.push_back({c.rewriters[a].rewriter_id, c.rewriters[b].rewriter_id, 0});
        }
      }
    }

    const json metrics = j.value("metrics", json::object());
    c.ged_budget = get_or<std::size_t>(metrics, "ged_budget", c.ged_budget);
    c.exact_threshold = get_or<std::size_t>(metrics, "exact_threshold", c.exact_threshold);
    c.label_aware = get_or<bool>(metrics, "label_aware", false);
    if (metrics.contains("embedding")) c.embedding = metrics["embedding"];

    const json exp = j.value("export", json::object());
    if (exp.contains("split") && !exp["split"].is_null()) {
      c.export_split = parse_split(exp["split"].get<std::string>());
    }
    if (exp.contains("finetune")) c.finetune = finetune_spec_from_json(exp["finetune"]);
    c.submit_finetune = get_or<bool>(exp, "submit", false);

    const json ann = j.value("annotation", json::object());
    c.annotation_dir = ann.contains("data_dir")
                           ? resolve(c.run_dir, ann["data_dir"].get<std::string>())
                           : c.run_dir / "annotation";
    if (ann.contains("static_dir")) {
      c.static_dir = resolve(base_dir, ann["static_dir"].get<std::string>());
    }
    for (const auto& a : ann.value("annotators", json::array())) {
      c.annotators.insert(a.get<std::string>());
    }
    c.max_annotators_per_task = get_or<std::size_t>(ann, "max_per_task", 3);
    c.host = get_or<std::string>(ann, "host", c.host);
    c.port = get_or<int>(ann, "port", c.port);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigError, std::string("config: ") + e.what());
  }
  c.config_hash = config_hash(j);
  return c;
}

RunConfig load_run_config(const fs::path& path, const std::optional<fs::path>& run_dir) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfigError, e.what(), e.code());
  }
  auto j = json::parse(text, nullptr, false, /*ignore_comments=*/true);
  if (j.is_discarded()) throw Error(ErrorCode::kConfigError, "config is not valid JSON: " + path.string());
  return run_config_from_json(j, fs::absolute(path).parent_path(), run_dir);
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"forge", "split",      "rewrite", "plan",
                                              "judge", "metrics",    "rank",    "export-dpo",
                                              "serve", "report"};
  return names;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kProviderUnavailable:
    case ErrorCode::kAuthError:
    case ErrorCode::kTimeout:
    case ErrorCode::kCacheMiss:
    case ErrorCode::kRewriteFailed:
    case ErrorCode::kPlanGenerationFailed: return 3;
    default: return 2;
  }
}

namespace {

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Run-directory bookkeeping shared by all stages.
class Run {
 public:
  explicit Run(const RunConfig& config) : cfg(config) {
    fs::create_directories(cfg.run_dir);
    if (fs::exists(path(kManifest))) entries_ = read_jsonl(path(kManifest));
  }

  fs::path path(const std::string& name) const { return cfg.run_dir / name; }

  /// Hashes stage inputs, checking existence and freshness against the manifest.
  json check_inputs(const std::string& command, const std::vector<std::string>& names) const {
    json hashes = json::object();
    for (const auto& name : names) {
      const auto p = path(name);
      if (!fs::exists(p)) {
        throw Error(ErrorCode::kMissingStage,
                    command + " needs " + name + "; run the producing stage first");
      }
      const auto h = sha256_file(p);
      if (const auto* producer = producer_of(name)) {
        const auto recorded = (*producer)["outputs"][name].get<std::string>();
        if (recorded != h) {
          throw Error(ErrorCode::kHashMismatch, name + " changed since `" +
                                                    (*producer)["command"].get<std::string>() +
                                                    "` wrote it; rerun that stage");
        }
      }
      hashes[name] = h;
    }
    return hashes;
  }

  /// Hash of a file outside the run directory.
  static json external_input(const fs::path& p) {
    if (!fs::exists(p)) throw Error(ErrorCode::kIoError, "input file not found: " + p.string());
    return sha256_file(p);
  }

  const json* producer_of(const std::string& name) const {
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      if ((*it)["outputs"].contains(name)) return &*it;
    }
    return nullptr;
  }

  bool cache_hit(const std::string& command, const json& inputs) const {
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      if ((*it)["command"] != command) continue;
      if ((*it)["inputs"] != inputs || (*it)["config_hash"] != cfg.config_hash) return false;
      for (const auto& [name, h] : (*it)["outputs"].items()) {
        if (!fs::exists(path(name)) || sha256_file(path(name)) != h.get<std::string>()) {
          return false;
        }
      }
      return true;
    }
    return false;
  }

  StageOutcome record(const std::string& command, const json& inputs,
                      const std::vector<std::string>& outputs, bool cached) {
    json out = json::object();
    for (const auto& name : outputs) out[name] = sha256_file(path(name));
    json entry = {{"command", command},
                  {"inputs", inputs},
                  {"outputs", out},
                  {"config_hash", cfg.config_hash},
                  {"seeds",
                   {{"split", cfg.split_seed}, {"shuffle", cfg.shuffle_seed}, {"in3", cfg.in3_seed}}},
                  {"timestamp", utc_timestamp()},
                  {"cached", cached}};
    std::ofstream f(path(kManifest), std::ios::app | std::ios::binary);
    f << entry.dump() << '\n';
    if (!f) throw Error(ErrorCode::kIoError, "cannot append to manifest");
    entries_.push_back(std::move(entry));
    spdlog::info("{}: {}", command, cached ? "cache hit" : "done");
    return StageOutcome{command, cached, outputs};
  }

  /// Outputs recorded by the last run of `command`.
  std::vector<std::string> last_outputs(const std::string& command) const {
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
      if ((*it)["command"] != command) continue;
      std::vector<std::string> names;
      for (const auto& [name, h] : (*it)["outputs"].items()) names.push_back(name);
      return names;
    }
    return {};
  }

  Gateway gateway(const std::string& role) const { return Gateway(cfg.provider(role)); }

  const RunConfig& cfg;

 private:
  std::vector<json> entries_;
};

std::map<std::string, Conversation> by_id(const std::vector<Conversation>& conversations) {
  std::map<std::string, Conversation> out;
  for (const auto& c : conversations) out.emplace(c.id, c);
  return out;
}

std::vector<Plan> read_plans(const fs::path& p, std::set<std::pair<std::string, std::string>>* failed) {
  std::vector<Plan> plans;
  for (const auto& row : read_jsonl(p)) {
    plans.push_back(plan_from_json(row));
    if (failed && row.contains("parse_error")) {
      failed->insert({plans.back().conversation_id, plans.back().rewriter_id});
    }
  }
  return plans;
}

std::vector<PreferenceRecord> read_preferences(const fs::path& p) {
  std::vector<PreferenceRecord> out;
  for (const auto& row : read_jsonl(p)) out.push_back(preference_record_from_json(row));
  return out;
}

SplitAssignment read_splits(const fs::path& p) {
  SplitAssignment out;
  for (const auto& row : read_jsonl(p)) {
    out[row.at("conversation_id").get<std::string>()] = parse_split(row.at("split").get<std::string>());
  }
  return out;
}

std::vector<std::string> rewriter_order(const RunConfig& cfg) {
  std::vector<std::string> ids;
  for (const auto& r : cfg.rewriters) ids.push_back(r.rewriter_id);
  return ids;
}

/// Presentations for every scheduled pair whose plans both exist, in
/// conversation-file order.
std::vector<Presentation> schedule(const RunConfig& cfg, const std::vector<Conversation>& convs,
                                   const PlanStore& plans) {
  std::vector<Presentation> out;
  for (const auto& pair : cfg.judge_pairs) {
    std::size_t used = 0;
    for (const auto& c : convs) {
      if (pair.limit && used >= pair.limit) break;
      if (!plans.count({c.id, pair.first}) || !plans.count({c.id, pair.second})) continue;
      out.push_back(make_presentation(
          c.id, pair.first, pair.second,
          presentation_seed(cfg.shuffle_seed, c.id, pair.first, pair.second)));
      ++used;
    }
  }
  std::stable_sort(out.begin(), out.end(), [&](const Presentation& a, const Presentation& b) {
    return a.conversation_id < b.conversation_id;
  });
  return out;
}

// Stages ---------------------------------------------------------------------

StageOutcome stage_forge(Run& run) {
  const auto& cfg = run.cfg;
  json inputs = json::object();
  if (cfg.forge_source != "generate") inputs["external:" + cfg.forge_input.string()] = Run::external_input(cfg.forge_input);
  if (run.cache_hit("forge", inputs)) return run.record("forge", inputs, run.last_outputs("forge"), true);

  std::vector<Conversation> convs;
  if (cfg.forge_source == "generate") {
    if (cfg.generation.empty()) throw Error(ErrorCode::kConfigError, "forge.specs is empty");
    const auto gw = run.gateway("generator");
    std::vector<std::vector<Conversation>> batches(cfg.generation.size());
    parallel_for(cfg.generation.size(), cfg.workers, [&](std::size_t i) {
      batches[i] = generate_conversations(cfg.generation[i], gw);
    });
    for (auto& b : batches) convs.insert(convs.end(), b.begin(), b.end());
  } else if (cfg.forge_source == "in3") {
    std::vector<In3Record> records;
    for (const auto& row : read_jsonl(cfg.forge_input)) records.push_back(in3_record_from_json(row));
    convs.resize(records.size());
    if (cfg.in3_mode == "llm") {
      const auto gw = run.gateway("generator");
      parallel_for(records.size(), cfg.workers, [&](std::size_t i) {
        convs[i] = convert_in3_llm(records[i], gw, cfg.in3_model, cfg.in3_default_topic);
      });
    } else {
      for (std::size_t i = 0; i < records.size(); ++i) {
        convs[i] = convert_in3(records[i], cfg.in3_seed, cfg.in3_default_topic);
      }
    }
  } else {
    convs = read_conversations(cfg.forge_input);
    for (auto& c : convs) c.provenance = Provenance::kIngested;
  }

  std::size_t redactions = 0;
  if (cfg.redact) {
    for (auto& c : convs) {
      auto r = redact(c);
      redactions += r.count;
      c = std::move(r.conversation);
    }
  }
  for (auto& c : convs) c = with_content_id(std::move(c));

  std::vector<std::string> outputs{kConversations};
  std::vector<Conversation> kept;
  if (cfg.vet) {
    std::optional<Gateway> gw;
    if (cfg.providers.count("vet") || cfg.providers.count("default")) gw.emplace(run.gateway("vet"));
    std::vector<VetReport> reports(convs.size());
    parallel_for(convs.size(), cfg.workers, [&](std::size_t i) {
      reports[i] = vet(convs[i], gw ? &*gw : nullptr, cfg.vet_model);
    });
    std::vector<json> rows;
    for (std::size_t i = 0; i < convs.size(); ++i) {
      rows.push_back(to_json(reports[i]));
      if (reports[i].disposition != Disposition::kReject) kept.push_back(convs[i]);
    }
    write_jsonl(run.path(kVet), rows);
    outputs.push_back(kVet);
  } else {
    for (const auto& c : convs) {
      if (validate_conversation(c).valid()) kept.push_back(c);
    }
  }

  std::set<std::string> seen;
  std::vector<Conversation> unique;
  for (auto& c : kept) {
    if (seen.insert(c.id).second) unique.push_back(std::move(c));
  }
  if (unique.empty()) throw Error(ErrorCode::kEmptyInput, "forge produced no usable conversations");
  spdlog::info("forge: {} conversations ({} dropped, {} redactions)", unique.size(),
               convs.size() - unique.size(), redactions);
  write_conversations(run.path(kConversations), unique);
  return run.record("forge", inputs, outputs, false);
}

StageOutcome stage_split(Run& run) {
  const auto& cfg = run.cfg;
  const auto inputs = run.check_inputs("split", {kConversations});
  if (run.cache_hit("split", inputs)) return run.record("split", inputs, {kSplits}, true);
  const auto convs = read_conversations(run.path(kConversations));
  std::vector<std::string> ids;
  std::map<std::string, std::string> strata;
  for (const auto& c : convs) {
    ids.push_back(c.id);
    if (cfg.stratify == "challenge") strata[c.id] = std::string(to_string(c.challenge));
    if (cfg.stratify == "topic") strata[c.id] = std::string(to_string(c.topic));
    if (cfg.stratify == "length") strata[c.id] = std::string(to_string(c.length_class));
  }
  const auto assignment =
      split_dataset(ids, cfg.split_ratios, cfg.split_seed, cfg.stratify ? &strata : nullptr);
  std::vector<json> rows;
  for (const auto& [id, s] : assignment) rows.push_back({{"conversation_id", id}, {"split", to_string(s)}});
  write_jsonl(run.path(kSplits), rows);
  return run.record("split", inputs, {kSplits}, false);
}

StageOutcome stage_rewrite(Run& run) {
  const auto& cfg = run.cfg;
  std::vector<std::string> in{kConversations};
  if (cfg.rewrite_split) in.push_back(kSplits);
  const auto inputs = run.check_inputs("rewrite", in);
  if (run.cache_hit("rewrite", inputs)) return run.record("rewrite", inputs, {kRewrites}, true);
  if (cfg.rewriters.empty()) throw Error(ErrorCode::kConfigError, "no rewriters configured");

  auto convs = read_conversations(run.path(kConversations));
  if (cfg.rewrite_split) {
    const auto splits = read_splits(run.path(kSplits));
    std::erase_if(convs, [&](const Conversation& c) {
      auto it = splits.find(c.id);
      return it == splits.end() || it->second != *cfg.rewrite_split;
    });
  }
  std::optional<Gateway> gw;
  for (const auto& r : cfg.rewriters) {
    if (r.kind != RewriterKind::kDummy && !gw) gw.emplace(run.gateway("rewriter"));
  }
  std::vector<std::vector<Rewrite>> out(convs.size());
  parallel_for(convs.size(), cfg.workers, [&](std::size_t i) {
    for (const auto& spec : cfg.rewriters) {
      out[i].push_back(run_rewriter(convs[i], spec, gw ? &*gw : nullptr));
    }
  });
  std::vector<json> rows;
  for (const auto& per_conv : out) {
    for (const auto& r : per_conv) rows.push_back(to_json(r));
  }
  write_jsonl(run.path(kRewrites), rows);
  return run.record("rewrite", inputs, {kRewrites}, false);
}

StageOutcome stage_plan(Run& run) {
  const auto& cfg = run.cfg;
  const auto inputs = run.check_inputs("plan", {kRewrites});
  if (run.cache_hit("plan", inputs)) return run.record("plan", inputs, {kPlans}, true);
  std::vector<Rewrite> rewrites;
  for (const auto& row : read_jsonl(run.path(kRewrites))) rewrites.push_back(rewrite_from_json(row));
  const auto gw = run.gateway("planner");
  std::vector<json> rows(rewrites.size());
  std::atomic<std::size_t> failed{0};
  parallel_for(rewrites.size(), cfg.workers, [&](std::size_t i) {
    const auto& rw = rewrites[i];
    const auto raw = generate_plan(rw, gw, cfg.planner_model);
    Plan plan;
    std::optional<std::string> error;
    try {
      plan = parse_plan(raw);
    } catch (const Error& e) {
      error = e.what();
      ++failed;
    }
    plan.conversation_id = rw.conversation_id;
    plan.rewriter_id = rw.rewriter_id;
    plan.planner_model_id = cfg.planner_model;
    rows[i] = to_json(plan);
    if (error) {
      rows[i]["valid"] = false;
      rows[i]["parse_error"] = *error;
    }
  });
  if (failed) spdlog::warn("plan: {} of {} planner replies were malformed", failed.load(), rows.size());
  write_jsonl(run.path(kPlans), rows);
  return run.record("plan", inputs, {kPlans}, false);
}

StageOutcome stage_judge(Run& run) {
  const auto& cfg = run.cfg;
  json inputs = run.check_inputs("judge", {kConversations, kPlans});
  std::vector<std::string> outputs{kPreferences};
  const auto events = cfg.annotation_dir / "events.jsonl";
  if (cfg.judge_mode == "human") {
    inputs["external:annotation/events.jsonl"] = Run::external_input(events);
    outputs.push_back(kHumanLabels);
  }
  if (run.cache_hit("judge", inputs)) return run.record("judge", inputs, outputs, true);

  const auto convs = read_conversations(run.path(kConversations));
  const auto conv_map = by_id(convs);
  std::vector<PreferenceRecord> records;
  if (cfg.judge_mode == "model") {
    const auto plans = make_plan_store(read_plans(run.path(kPlans), nullptr));
    std::map<std::string, std::map<std::string, Plan>> per_conv;
    for (const auto& [key, p] : plans) per_conv[key.first][key.second] = p;
    const auto presentations = schedule(cfg, convs, plans);
    const auto gw = run.gateway("judge");
    std::vector<PreferenceRecord> out(presentations.size());
    parallel_for(presentations.size(), cfg.workers, [&](std::size_t i) {
      const auto& p = presentations[i];
      out[i] = judge_llm(p, per_conv.at(p.conversation_id), conv_map.at(p.conversation_id),
                         Rubric::standard(), gw, cfg.judge_model);
    });
    records = std::move(out);
  } else {
    AnnotationStore store({cfg.annotation_dir, cfg.annotators, cfg.max_annotators_per_task});
    const auto labels = store.export_labels();
    std::vector<json> raw;
    std::vector<std::string> order;
    std::map<std::string, std::vector<PreferenceRecord>> groups;
    for (const auto& l : labels) {
      raw.push_back(to_json(l));
      const auto key = l.presentation.key();
      if (!groups.count(key)) order.push_back(key);
      groups[key].push_back(l);
    }
    write_jsonl(run.path(kHumanLabels), raw);
    for (const auto& key : order) {
      const auto& g = groups[key];
      records.push_back(make_record(g.front().presentation, majority_vote(g), "human:majority"));
    }
  }
  std::vector<json> rows;
  for (const auto& r : records) rows.push_back(to_json(r));
  write_jsonl(run.path(kPreferences), rows);
  return run.record("judge", inputs, outputs, false);
}

StageOutcome stage_metrics(Run& run) {
  const auto& cfg = run.cfg;
  const auto inputs = run.check_inputs("metrics", {kConversations, kPlans});
  if (run.cache_hit("metrics", inputs)) return run.record("metrics", inputs, {kMetrics}, true);

  const auto convs = read_conversations(run.path(kConversations));
  std::set<std::pair<std::string, std::string>> failed;
  const auto plans = make_plan_store(read_plans(run.path(kPlans), &failed));
  const auto embedder = make_embedding_provider(cfg.embedding);
  const auto costs = cfg.label_aware ? GedCostModel::label_aware() : GedCostModel{};
  const auto ids = rewriter_order(cfg);

  std::vector<std::vector<json>> out(convs.size());
  parallel_for(convs.size(), cfg.workers, [&](std::size_t i) {
    const auto& c = convs[i];
    for (std::size_t a = 0; a < ids.size(); ++a) {
      for (std::size_t b = a + 1; b < ids.size(); ++b) {
        auto pa = plans.find({c.id, ids[a]});
        auto pb = plans.find({c.id, ids[b]});
        if (pa == plans.end() || pb == plans.end()) continue;
        const auto g = ged(pa->second, pb->second, costs, cfg.exact_threshold, cfg.ged_budget);
        json row = {{"conversation_id", c.id},
                    {"rewriter_a", ids[a]},
                    {"rewriter_b", ids[b]},
                    {"challenge", to_string(c.challenge)},
                    {"topic", to_string(c.topic)},
                    {"length_class", to_string(c.length_class)},
                    {"turns", c.turns.size()},
                    {"node_delta", node_delta(pa->second, pb->second)},
                    {"edge_delta", edge_delta(pa->second, pb->second)},
                    {"ged", g.cost},
                    {"ged_exact", g.exact},
                    {"ged_expansions", g.expansions}};
        const bool malformed = failed.count({c.id, ids[a]}) || failed.count({c.id, ids[b]});
        if (malformed || pa->second.nodes.empty() || pb->second.nodes.empty()) {
          row["semantic_distance"] = nullptr;
          row["bertscore"] = nullptr;
        } else {
          const auto s = bertscore(plan_text(pa->second), plan_text(pb->second), *embedder);
          row["semantic_distance"] = s.distance();
          row["bertscore"] = {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
        }
        if (malformed) row["malformed_plan"] = true;
        out[i].push_back(std::move(row));
      }
    }
  });
  std::vector<json> rows;
  for (auto& per_conv : out) {
    for (auto& r : per_conv) rows.push_back(std::move(r));
  }
  write_jsonl(run.path(kMetrics), rows);
  return run.record("metrics", inputs, {kMetrics}, false);
}

StageOutcome stage_rank(Run& run) {
  const auto inputs = run.check_inputs("rank", {kPreferences});
  if (run.cache_hit("rank", inputs)) return run.record("rank", inputs, {kRanks}, true);
  std::map<std::string, std::vector<PreferenceRecord>> groups;
  for (auto& r : read_preferences(run.path(kPreferences))) {
    groups[r.presentation.conversation_id].push_back(std::move(r));
  }
  std::vector<json> rows;
  std::size_t incomplete = 0;
  for (const auto& [cid, recs] : groups) {
    try {
      rows.push_back(to_json(rank_rewriters(recs)));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kIncompletePairSet) throw;
      ++incomplete;
    }
  }
  if (incomplete) spdlog::warn("rank: {} conversations lack a complete pair set", incomplete);
  write_jsonl(run.path(kRanks), rows);
  return run.record("rank", inputs, {kRanks}, false);
}

StageOutcome stage_export_dpo(Run& run) {
  const auto& cfg = run.cfg;
  std::vector<std::string> in{kConversations, kRewrites, kPlans, kPreferences};
  if (cfg.export_split) in.push_back(kSplits);
  const auto inputs = run.check_inputs("export-dpo", in);
  std::vector<std::string> outputs{kDpo, kSft, kExportSummary};
  if (cfg.submit_finetune) outputs.push_back(kFinetuneJobs);
  if (run.cache_hit("export-dpo", inputs)) return run.record("export-dpo", inputs, outputs, true);

  auto convs = by_id(read_conversations(run.path(kConversations)));
  if (cfg.export_split) {
    const auto splits = read_splits(run.path(kSplits));
    std::erase_if(convs, [&](const auto& kv) {
      auto it = splits.find(kv.first);
      return it == splits.end() || it->second != *cfg.export_split;
    });
  }
  std::vector<Rewrite> rewrites;
  for (const auto& row : read_jsonl(run.path(kRewrites))) rewrites.push_back(rewrite_from_json(row));
  const auto plans = make_plan_store(read_plans(run.path(kPlans), nullptr));
  auto records = read_preferences(run.path(kPreferences));
  std::erase_if(records, [&](const PreferenceRecord& r) {
    return !convs.count(r.presentation.conversation_id);
  });
  const auto source =
      cfg.judge_mode == "human" ? LabelSource::kHumanMajority : LabelSource::kModelJudge;
  const auto traced =
      trace_preferences(records, make_rewrite_store(rewrites), convs, &plans, source, false);
  const auto dpo = export_dpo_file(traced.pairs, run.path(kDpo));
  const auto sft = export_judge_sft_file(build_judge_sft(records, convs, plans), run.path(kSft));
  json summary = {{"label_source", to_string(source)},
                  {"records", records.size()},
                  {"dpo", {{"lines", dpo.lines}, {"sha256", dpo.sha256},
                           {"skipped_ties", traced.skipped_ties}, {"dangling", traced.dangling}}},
                  {"sft", {{"lines", sft.lines}, {"sha256", sft.sha256}}}};
  // Provenance of each training line, which the provider file format cannot carry.
  json provenance = json::array();
  for (const auto& p : traced.pairs) {
    provenance.push_back({{"conversation_id", p.conversation_id},
                          {"preferred_rewriter", p.preferred_rewriter},
                          {"non_preferred_rewriter", p.non_preferred_rewriter}});
  }
  summary["dpo"]["pairs"] = std::move(provenance);
  write_file(run.path(kExportSummary), summary.dump(2) + "\n");

  if (cfg.submit_finetune) {
    auto spec = cfg.finetune.value_or(FinetuneJobSpec{});
    spec.training_file = spec.kind == FinetuneKind::kDpo ? run.path(kDpo) : run.path(kSft);
    auto client = make_finetune_client(cfg.provider("finetune"));
    const auto ref = submit_finetune(spec, *client);
    write_jsonl(run.path(kFinetuneJobs),
                {{{"job_id", ref.job_id}, {"file_id", ref.file_id}, {"kind", to_string(spec.kind)},
                  {"request", finetune_request_body(spec, ref.file_id)}}});
  }
  return run.record("export-dpo", inputs, outputs, false);
}

StageOutcome stage_report(Run& run) {
  const auto& cfg = run.cfg;
  const std::vector<std::string> in{kConversations, kPreferences, kRanks, kMetrics};
  const auto inputs = run.check_inputs("report", in);
  for (const auto& name : in) {
    if (const auto* producer = run.producer_of(name);
        producer && (*producer)["config_hash"] != cfg.config_hash) {
      throw Error(ErrorCode::kHashMismatch,
                  name + " was produced under a different config; rerun `" +
                      (*producer)["command"].get<std::string>() + "`");
    }
  }
  if (run.cache_hit("report", inputs)) return run.record("report", inputs, run.last_outputs("report"), true);

  ReportInputs ri;
  ri.conversations = by_id(read_conversations(run.path(kConversations)));
  ri.preferences = read_preferences(run.path(kPreferences));
  for (const auto& row : read_jsonl(run.path(kRanks))) {
    RankTable t;
    t.conversation_id = row.at("conversation_id").get<std::string>();
    for (const auto& [id, e] : row.at("rewriters").items()) {
      t.entries[id] = RankEntry{e.at("score").get<double>(), e.at("rank").get<int>()};
    }
    ri.ranks.push_back(std::move(t));
  }
  ri.metrics = read_jsonl(run.path(kMetrics));
  ri.rewriters = rewriter_order(cfg);
  std::vector<std::string> outputs;
  for (const auto& name : write_report(ri, run.path("report"))) outputs.push_back("report/" + name);
  return run.record("report", inputs, outputs, false);
}

}  // namespace

std::shared_ptr<AnnotationStore> prepare_annotation(const RunConfig& config) {
  Run run(config);
  const auto inputs = run.check_inputs("serve", {kConversations, kPlans});
  if (config.annotators.empty()) {
    throw Error(ErrorCode::kConfigError, "annotation.annotators is empty");
  }
  const auto convs = read_conversations(run.path(kConversations));
  const auto conv_map = by_id(convs);
  const auto plans = make_plan_store(read_plans(run.path(kPlans), nullptr));
  std::vector<AnnotationTask> tasks;
  for (const auto& p : schedule(config, convs, plans)) {
    tasks.push_back(make_annotation_task(p, conv_map.at(p.conversation_id), plans));
  }
  AnnotationStore::seed(config.annotation_dir, tasks);
  const auto rel = fs::relative(config.annotation_dir / "tasks.jsonl", config.run_dir).string();
  if (rel.rfind("..", 0) != 0) run.record("serve", inputs, {rel}, false);
  return std::make_shared<AnnotationStore>(
      AnnotationConfig{config.annotation_dir, config.annotators, config.max_annotators_per_task});
}

StageOutcome run_stage(const std::string& command, const RunConfig& config) {
  Run run(config);
  if (command == "forge") return stage_forge(run);
  if (command == "split") return stage_split(run);
  if (command == "rewrite") return stage_rewrite(run);
  if (command == "plan") return stage_plan(run);
  if (command == "judge") return stage_judge(run);
  if (command == "metrics") return stage_metrics(run);
  if (command == "rank") return stage_rank(run);
  if (command == "export-dpo") return stage_export_dpo(run);
  if (command == "report") return stage_report(run);
  if (command == "serve") {
    auto store = prepare_annotation(config);
    AnnotationServer server(store, config.static_dir);
    if (!server.listen(config.host, config.port)) {
      throw Error(ErrorCode::kIoError,
                  "cannot listen on " + config.host + ":" + std::to_string(config.port));
    }
    return StageOutcome{"serve", false, {}};
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown command '" + command + "'");
}

std::vector<StageOutcome> run_all(const RunConfig& config) {
  std::vector<StageOutcome> out;
  for (const auto* name :
       {"forge", "split", "rewrite", "plan", "judge", "metrics", "rank", "export-dpo", "report"}) {
    out.push_back(run_stage(name, config));
  }
  return out;
}

}  // namespace convplan
