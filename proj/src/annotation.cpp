#include "convplan/annotation.hpp"

#include <fstream>
#include <mutex>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "convplan/error.hpp"

namespace convplan {

AnnotationTask make_annotation_task(const Presentation& presentation,
                                    const Conversation& conversation, const PlanStore& plans) {
  auto a = plans.find({presentation.conversation_id, presentation.slot_a});
  auto b = plans.find({presentation.conversation_id, presentation.slot_b});
  if (a == plans.end() || b == plans.end()) {
    throw Error(ErrorCode::kDanglingReference,
                "no plan for one side of presentation on " + presentation.conversation_id);
  }
  return AnnotationTask{"task-" + sha256_hex(presentation.key()).substr(0, 16), presentation,
                        conversation, a->second, b->second};
}

json to_json(const AnnotationTask& t) {
  return {{"task_id", t.task_id},
          {"conversation_id", t.presentation.conversation_id},
          {"slot_a", t.presentation.slot_a},
          {"slot_b", t.presentation.slot_b},
          {"shuffle_seed", t.presentation.shuffle_seed},
          {"conversation", to_json(t.conversation)},
          {"plan_a", to_json(t.plan_a)},
          {"plan_b", to_json(t.plan_b)}};
}

AnnotationTask annotation_task_from_json(const json& j) {
  try {
    return AnnotationTask{
        j.at("task_id").get<std::string>(),
        Presentation{j.at("conversation_id").get<std::string>(), j.at("slot_a").get<std::string>(),
                     j.at("slot_b").get<std::string>(), j.at("shuffle_seed").get<std::uint64_t>()},
        conversation_from_json(j.at("conversation")), plan_from_json(j.at("plan_a")),
        plan_from_json(j.at("plan_b"))};
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaError, std::string("annotation task: ") + e.what());
  }
}

json task_view_json(const AnnotationTask& t, const Rubric& rubric) {
  json turns = json::array();
  for (const auto& turn : t.conversation.turns) turns.push_back(to_json(turn));
  json criteria = json::array();
  for (const auto& c : rubric.criteria) {
    criteria.push_back({{"title", c.title}, {"description", c.description}});
  }
  return {{"task_id", t.task_id},
          {"conversation", std::move(turns)},
          {"plan_a", plan_graph_json(t.plan_a)},
          {"plan_b", plan_graph_json(t.plan_b)},
          {"rubric", std::move(criteria)}};
}

namespace {

std::filesystem::path tasks_path(const std::filesystem::path& dir) { return dir / "tasks.jsonl"; }
std::filesystem::path events_path(const std::filesystem::path& dir) { return dir / "events.jsonl"; }

/// Round-robin over conversations in first-seen order.
std::vector<AnnotationTask> interleave(std::vector<AnnotationTask> tasks) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<AnnotationTask>> by_conv;
  for (auto& t : tasks) {
    auto& bucket = by_conv[t.presentation.conversation_id];
    if (bucket.empty()) order.push_back(t.presentation.conversation_id);
    bucket.push_back(std::move(t));
  }
  std::vector<AnnotationTask> out;
  for (std::size_t round = 0; out.size() < tasks.size(); ++round) {
    for (const auto& cid : order) {
      auto& bucket = by_conv[cid];
      if (round < bucket.size()) out.push_back(std::move(bucket[round]));
    }
  }
  return out;
}

}  // namespace

void AnnotationStore::seed(const std::filesystem::path& data_dir,
                           const std::vector<AnnotationTask>& tasks) {
  std::filesystem::create_directories(data_dir);
  std::vector<json> rows;
  for (const auto& t : tasks) rows.push_back(to_json(t));
  const auto text = to_jsonl(rows);
  const auto path = tasks_path(data_dir);
  if (std::filesystem::exists(path) && read_file(path) != text &&
      std::filesystem::exists(events_path(data_dir)) &&
      std::filesystem::file_size(events_path(data_dir)) > 0) {
    throw Error(ErrorCode::kConfigError,
                "refusing to replace the task list in " + data_dir.string() + ": labels exist");
  }
  write_file(path, text);
}

AnnotationStore::AnnotationStore(AnnotationConfig config) : config_(std::move(config)) {
  if (config_.max_annotators_per_task == 0) {
    throw Error(ErrorCode::kConfigError, "max_annotators_per_task must be at least 1");
  }
  std::filesystem::create_directories(config_.data_dir);
  std::vector<AnnotationTask> tasks;
  if (std::filesystem::exists(tasks_path(config_.data_dir))) {
    for (const auto& row : read_jsonl(tasks_path(config_.data_dir))) {
      tasks.push_back(annotation_task_from_json(row));
    }
  }
  tasks_ = interleave(std::move(tasks));
  for (std::size_t i = 0; i < tasks_.size(); ++i) index_[tasks_[i].task_id] = i;

  if (!std::filesystem::exists(events_path(config_.data_dir))) return;
  for (const auto& ev : read_jsonl(events_path(config_.data_dir))) {
    const auto type = ev.at("type").get<std::string>();
    const auto annotator = ev.at("annotator").get<std::string>();
    const auto task_id = ev.at("task_id").get<std::string>();
    if (!index_.count(task_id)) {
      throw Error(ErrorCode::kSchemaError, "event log references unknown task " + task_id);
    }
    if (type == "assign") {
      apply_assign(annotator, task_id);
    } else if (type == "label") {
      const auto v = parse_verdict_name(ev.at("verdict").get<std::string>());
      labeled_[{annotator, task_id}] = v;
      labels_.push_back({annotator, task_id, v});
    } else {
      throw Error(ErrorCode::kSchemaError, "unknown event type '" + type + "'");
    }
  }
  spdlog::info("annotation store: {} tasks, {} labels replayed", tasks_.size(), labels_.size());
}

void AnnotationStore::apply_assign(const std::string& annotator, const std::string& task_id) {
  assigned_[task_id].insert(annotator);
}

void AnnotationStore::append_event(const json& event) {
  std::ofstream out(events_path(config_.data_dir), std::ios::app | std::ios::binary);
  out << event.dump() << '\n';
  out.flush();
  if (!out) throw Error(ErrorCode::kIoError, "cannot append to annotation event log");
}

void AnnotationStore::check_annotator(const std::string& annotator) const {
  if (!config_.annotators.count(annotator)) {
    throw Error(ErrorCode::kUnknownAnnotator, "unknown annotator '" + annotator + "'");
  }
}

std::optional<AnnotationTask> AnnotationStore::next_task(const std::string& annotator) {
  check_annotator(annotator);
  std::unique_lock lock(mutex_);
  for (const auto& t : tasks_) {
    const auto& who = assigned_[t.task_id];
    if (who.count(annotator) || who.size() >= config_.max_annotators_per_task) continue;
    append_event({{"type", "assign"}, {"annotator", annotator}, {"task_id", t.task_id}});
    apply_assign(annotator, t.task_id);
    return t;
  }
  return std::nullopt;
}

LabelAck AnnotationStore::submit_label(const std::string& annotator, const std::string& task_id,
                                       Verdict verdict) {
  check_annotator(annotator);
  std::unique_lock lock(mutex_);
  if (!index_.count(task_id)) throw Error(ErrorCode::kUnknownTask, "unknown task '" + task_id + "'");
  auto who = assigned_.find(task_id);
  if (who == assigned_.end() || !who->second.count(annotator)) {
    throw Error(ErrorCode::kNotAssigned, task_id + " is not assigned to " + annotator);
  }
  auto prior = labeled_.find({annotator, task_id});
  if (prior != labeled_.end()) {
    if (prior->second == verdict) return {task_id, verdict, true};
    throw Error(ErrorCode::kDuplicateLabel, annotator + " already labeled " + task_id + " as " +
                                                std::string(to_string(prior->second)));
  }
  append_event({{"type", "label"},
                {"annotator", annotator},
                {"task_id", task_id},
                {"verdict", to_string(verdict)}});
  labeled_[{annotator, task_id}] = verdict;
  labels_.push_back({annotator, task_id, verdict});
  return {task_id, verdict, false};
}

std::vector<PreferenceRecord> AnnotationStore::export_labels() const {
  std::shared_lock lock(mutex_);
  std::vector<PreferenceRecord> out;
  out.reserve(labels_.size());
  for (const auto& l : labels_) {
    out.push_back(
        make_record(tasks_[index_.at(l.task_id)].presentation, l.verdict, "human:" + l.annotator));
  }
  return out;
}

json AnnotationStore::export_blind() const {
  std::shared_lock lock(mutex_);
  json rows = json::array();
  for (const auto& l : labels_) {
    rows.push_back({{"task_id", l.task_id},
                    {"annotator", l.annotator},
                    {"verdict", to_string(l.verdict)}});
  }
  return rows;
}

json AnnotationStore::progress() const {
  std::shared_lock lock(mutex_);
  std::map<std::string, std::size_t> labels_per_task;
  json annotators = json::object();
  for (const auto& a : config_.annotators) annotators[a] = {{"assigned", 0}, {"completed", 0}};
  for (const auto& [task, who] : assigned_) {
    for (const auto& a : who) annotators[a]["assigned"] = annotators[a]["assigned"].get<int>() + 1;
  }
  for (const auto& l : labels_) {
    ++labels_per_task[l.task_id];
    annotators[l.annotator]["completed"] = annotators[l.annotator]["completed"].get<int>() + 1;
  }
  std::size_t done = 0;
  for (const auto& [task, n] : labels_per_task) {
    if (n >= config_.max_annotators_per_task) ++done;
  }
  return {{"tasks", tasks_.size()},
          {"tasks_done", done},
          {"labels", labels_.size()},
          {"max_annotators_per_task", config_.max_annotators_per_task},
          {"annotators", std::move(annotators)}};
}

std::size_t AnnotationStore::task_count() const { return tasks_.size(); }

struct AnnotationServer::Impl {
  std::shared_ptr<AnnotationStore> store;
  httplib::Server server;
};

namespace {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnknownAnnotator:
    case ErrorCode::kUnknownTask: return 404;
    case ErrorCode::kNotAssigned: return 403;
    case ErrorCode::kDuplicateLabel: return 409;
    case ErrorCode::kIoError: return 500;
    default: return 400;
  }
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
  send_json(res, {{"error", error_code_name(e.code())}, {"message", e.what()}},
            http_status(e.code()));
}

constexpr const char* kPlaceholderPage =
    "<!doctype html><title>annotation</title>"
    "<p>The annotation client is not installed. The JSON API is available under /api.</p>";

}  // namespace

AnnotationServer::AnnotationServer(std::shared_ptr<AnnotationStore> store,
                                   std::filesystem::path static_dir)
    : impl_(std::make_unique<Impl>()) {
  impl_->store = std::move(store);
  auto& srv = impl_->server;
  auto st = impl_->store;

  srv.Get("/api/tasks/next", [st](const httplib::Request& req, httplib::Response& res) {
    try {
      if (!req.has_param("annotator")) {
        throw Error(ErrorCode::kInvalidArgument, "missing annotator parameter");
      }
      auto task = st->next_task(req.get_param_value("annotator"));
      send_json(res, task ? task_view_json(*task) : json{{"done", true}});
    } catch (const Error& e) {
      send_error(res, e);
    }
  });

  srv.Post("/api/labels", [st](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto body = json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object() || !body.contains("annotator") ||
          !body.contains("task_id") || !body.contains("verdict") ||
          !body["verdict"].is_string()) {
        throw Error(ErrorCode::kSchemaError, "expected {annotator, task_id, verdict}");
      }
      const auto ack =
          st->submit_label(body["annotator"].get<std::string>(), body["task_id"].get<std::string>(),
                           parse_verdict_name(body["verdict"].get<std::string>()));
      send_json(res, {{"ok", true},
                      {"task_id", ack.task_id},
                      {"verdict", to_string(ack.verdict)},
                      {"duplicate", ack.duplicate}});
    } catch (const Error& e) {
      send_error(res, e);
    } catch (const json::exception& e) {
      send_error(res, Error(ErrorCode::kSchemaError, e.what()));
    }
  });

  srv.Get("/api/progress", [st](const httplib::Request&, httplib::Response& res) {
    send_json(res, st->progress());
  });

  srv.Get("/api/export", [st](const httplib::Request&, httplib::Response& res) {
    send_json(res, st->export_blind());
  });

  if (!static_dir.empty() && std::filesystem::is_directory(static_dir)) {
    srv.set_mount_point("/", static_dir.string());
  } else {
    srv.Get("/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(kPlaceholderPage, "text/html");
    });
  }
}

AnnotationServer::~AnnotationServer() { stop(); }

bool AnnotationServer::listen(const std::string& host, int port) {
  spdlog::info("annotation service on http://{}:{}", host, port);
  return impl_->server.listen(host, port);
}

int AnnotationServer::bind_any(const std::string& host) {
  return impl_->server.bind_to_any_port(host);
}

bool AnnotationServer::serve() { return impl_->server.listen_after_bind(); }

void AnnotationServer::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

void AnnotationServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace convplan
