#pragma once

// Human pairwise annotation: a file-backed task store and the HTTP service the
// browser client talks to. Nothing served over HTTP names a rewriter or model.

#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "convplan/core.hpp"
#include "convplan/dpo.hpp"
#include "convplan/plan.hpp"
#include "convplan/preference.hpp"

namespace convplan {

struct AnnotationTask {
  std::string task_id;
  Presentation presentation;
  Conversation conversation;
  Plan plan_a;
  Plan plan_b;
};

/// Task id is a hash of the presentation, so it reveals nothing about slots.
/// Throws DanglingReference when either plan is missing.
AnnotationTask make_annotation_task(const Presentation& presentation,
                                    const Conversation& conversation, const PlanStore& plans);

json to_json(const AnnotationTask& task);
AnnotationTask annotation_task_from_json(const json& j);

/// Blind view sent to annotators: turns, slot-ordered plan graphs, rubric.
json task_view_json(const AnnotationTask& task, const Rubric& rubric = Rubric::standard());

struct AnnotationConfig {
  std::filesystem::path data_dir;
  std::set<std::string> annotators;
  std::size_t max_annotators_per_task = 3;
};

struct LabelAck {
  std::string task_id;
  Verdict verdict = Verdict::kTie;
  /// True when this exact label was already stored.
  bool duplicate = false;
};

/// Append-only event log (data_dir/events.jsonl) replayed on open; task list in
/// data_dir/tasks.jsonl. Mutations are serialized, reads run concurrently.
class AnnotationStore {
 public:
  explicit AnnotationStore(AnnotationConfig config);

  /// Writes the task list. Refuses to replace a different list once labels exist.
  static void seed(const std::filesystem::path& data_dir, const std::vector<AnnotationTask>& tasks);

  /// Assigns and returns the next task this annotator has not yet received,
  /// interleaving conversations. Throws UnknownAnnotator.
  std::optional<AnnotationTask> next_task(const std::string& annotator);

  /// Throws UnknownAnnotator, UnknownTask, NotAssigned, DuplicateLabel.
  LabelAck submit_label(const std::string& annotator, const std::string& task_id, Verdict verdict);

  /// Derandomized records in submission order.
  std::vector<PreferenceRecord> export_labels() const;

  /// Blind label rows {task_id, annotator, verdict} in submission order.
  json export_blind() const;

  json progress() const;

  std::size_t task_count() const;
  const AnnotationConfig& config() const { return config_; }

 private:
  struct Label {
    std::string annotator;
    std::string task_id;
    Verdict verdict;
  };

  void apply_assign(const std::string& annotator, const std::string& task_id);
  void append_event(const json& event);
  void check_annotator(const std::string& annotator) const;

  AnnotationConfig config_;
  std::vector<AnnotationTask> tasks_;
  std::map<std::string, std::size_t> index_;
  std::map<std::string, std::set<std::string>> assigned_;  // task -> annotators
  std::map<std::pair<std::string, std::string>, Verdict> labeled_;  // (annotator, task)
  std::vector<Label> labels_;
  mutable std::shared_mutex mutex_;
};

/// HTTP front end:
///   GET  /api/tasks/next?annotator=ID   -> task view, or {"done": true}
///   POST /api/labels {annotator, task_id, verdict}
///   GET  /api/progress
///   GET  /api/export
/// plus static files from `static_dir` at /.
class AnnotationServer {
 public:
  AnnotationServer(std::shared_ptr<AnnotationStore> store, std::filesystem::path static_dir = {});
  ~AnnotationServer();

  /// Binds and serves until stop(). Returns false if the port cannot be bound.
  bool listen(const std::string& host, int port);
  /// Binds to a free port; returns it, or -1 on failure. Call serve() next.
  int bind_any(const std::string& host);
  bool serve();
  void stop();
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace convplan
