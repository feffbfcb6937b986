#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "convplan/annotation.hpp"
#include "test_util.hpp"

using namespace convplan;

namespace {

// Two conversations, one presentation each per rewriter pair.
std::vector<AnnotationTask> tasks() {
  std::vector<AnnotationTask> out;
  for (const std::string first : {"USER: find a cheap flight", "USER: cook rice"}) {
    const auto c = testutil::conversation({first});
    PlanStore plans;
    for (const std::string rw : {"secret-alpha", "secret-beta", "secret-gamma"}) {
      Plan p;
      p.nodes = {{1, "do the thing"}, {2, "check result"}};
      p.edges = {{1, 2}};
      p.conversation_id = c.id;
      p.rewriter_id = rw;
      plans[{c.id, rw}] = p;
    }
    out.push_back(make_annotation_task(make_presentation(c.id, "secret-alpha", "secret-beta", 1), c, plans));
    out.push_back(make_annotation_task(make_presentation(c.id, "secret-alpha", "secret-gamma", 2), c, plans));
  }
  return out;
}

AnnotationConfig config(const std::filesystem::path& dir, std::size_t cap = 2) {
  return AnnotationConfig{dir, {"ann1", "ann2", "ann3"}, cap};
}

}  // namespace

TEST(AnnotationTask, IdAndViewAreBlind) {
  const auto t = tasks();
  for (const auto& task : t) {
    EXPECT_EQ(task.task_id.rfind("task-", 0), 0u);
    const auto view = task_view_json(task).dump();
    EXPECT_EQ(view.find("secret-"), std::string::npos) << view;
    EXPECT_EQ(view.find("shuffle"), std::string::npos);
    EXPECT_NE(view.find("Latest Intent"), std::string::npos);
    const auto back = annotation_task_from_json(to_json(task));
    EXPECT_EQ(back.presentation, task.presentation);
    EXPECT_TRUE(back.plan_a.same_graph(task.plan_a));
  }
  EXPECT_NE(t[0].task_id, t[1].task_id);
}

TEST(AnnotationTask, MissingPlan) {
  const auto c = testutil::conversation({"USER: x"});
  EXPECT_CONVPLAN_ERROR(make_annotation_task(make_presentation(c.id, "a", "b", 0), c, {}),
                     ErrorCode::kDanglingReference);
}

TEST(AnnotationStore, AssignmentInterleavesAndCaps) {
  testutil::TempDir dir;
  AnnotationStore::seed(dir.path(), tasks());
  AnnotationStore store(config(dir.path(), 2));
  const auto a = store.next_task("ann1");
  const auto b = store.next_task("ann1");
  ASSERT_TRUE(a && b);
  EXPECT_NE(a->conversation.id, b->conversation.id);  // round-robin across conversations
  EXPECT_TRUE(store.next_task("ann1"));
  EXPECT_TRUE(store.next_task("ann1"));
  EXPECT_FALSE(store.next_task("ann1"));
  for (int i = 0; i < 4; ++i) EXPECT_TRUE(store.next_task("ann2"));
  EXPECT_FALSE(store.next_task("ann3")) << "cap of 2 annotators per task";
  EXPECT_CONVPLAN_ERROR(store.next_task("mallory"), ErrorCode::kUnknownAnnotator);
}

TEST(AnnotationStore, LabelRulesAndReplay) {
  testutil::TempDir dir;
  const auto t = tasks();
  AnnotationStore::seed(dir.path(), t);
  std::string tid;
  {
    AnnotationStore store(config(dir.path()));
    tid = store.next_task("ann1")->task_id;
    EXPECT_CONVPLAN_ERROR(store.submit_label("ann2", tid, Verdict::kA), ErrorCode::kNotAssigned);
    EXPECT_CONVPLAN_ERROR(store.submit_label("ann1", "task-nope", Verdict::kA), ErrorCode::kUnknownTask);
    EXPECT_CONVPLAN_ERROR(store.submit_label("eve", tid, Verdict::kA), ErrorCode::kUnknownAnnotator);
    EXPECT_FALSE(store.submit_label("ann1", tid, Verdict::kB).duplicate);
    EXPECT_TRUE(store.submit_label("ann1", tid, Verdict::kB).duplicate);
    EXPECT_CONVPLAN_ERROR(store.submit_label("ann1", tid, Verdict::kA), ErrorCode::kDuplicateLabel);
  }
  AnnotationStore reopened(config(dir.path()));
  const auto labels = reopened.export_labels();
  ASSERT_EQ(labels.size(), 1u);
  EXPECT_EQ(labels[0].judge, "human:ann1");
  EXPECT_EQ(labels[0].verdict, Verdict::kB);
  EXPECT_EQ(labels[0].winner, labels[0].presentation.slot_b);
  EXPECT_EQ(reopened.progress()["labels"], 1);
  // The first task is already assigned to ann1, so the next one differs.
  EXPECT_NE(reopened.next_task("ann1")->task_id, tid);

  auto changed = t;
  changed.pop_back();
  EXPECT_THROW(AnnotationStore::seed(dir.path(), changed), Error);
  EXPECT_NO_THROW(AnnotationStore::seed(dir.path(), t));
}

TEST(AnnotationStore, ConcurrentAnnotators) {
  testutil::TempDir dir;
  AnnotationStore::seed(dir.path(), tasks());
  AnnotationStore store(config(dir.path(), 3));
  std::vector<std::thread> threads;
  for (const std::string ann : {"ann1", "ann2", "ann3"}) {
    threads.emplace_back([&store, ann] {
      while (auto t = store.next_task(ann)) store.submit_label(ann, t->task_id, Verdict::kA);
    });
  }
  for (auto& th : threads) th.join();
  EXPECT_EQ(store.export_labels().size(), 12u);
  EXPECT_EQ(store.progress()["tasks_done"], 4);
  AnnotationStore reopened(config(dir.path(), 3));
  EXPECT_EQ(reopened.export_labels().size(), 12u);
}

class AnnotationHttp : public ::testing::Test {
 protected:
  void SetUp() override {
    AnnotationStore::seed(dir_.path(), tasks());
    store_ = std::make_shared<AnnotationStore>(config(dir_.path()));
    server_ = std::make_unique<AnnotationServer>(store_);
    port_ = server_->bind_any("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_->serve(); });
    server_->wait_until_ready();
  }
  void TearDown() override {
    server_->stop();
    if (thread_.joinable()) thread_.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

  testutil::TempDir dir_;
  std::shared_ptr<AnnotationStore> store_;
  std::unique_ptr<AnnotationServer> server_;
  std::thread thread_;
  int port_ = 0;
};

TEST_F(AnnotationHttp, FullLabelFlow) {
  auto cli = client();
  auto res = cli.Get("/api/tasks/next?annotator=ann1");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(res->body.find("secret-"), std::string::npos);
  const auto view = json::parse(res->body);
  const auto tid = view["task_id"].get<std::string>();

  json label = {{"annotator", "ann1"}, {"task_id", tid}, {"verdict", "A"}};
  res = cli.Post("/api/labels", label.dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  label["verdict"] = "B";
  res = cli.Post("/api/labels", label.dump(), "application/json");
  EXPECT_EQ(res->status, 409);
  label["annotator"] = "ann2";
  res = cli.Post("/api/labels", label.dump(), "application/json");
  EXPECT_EQ(res->status, 403);
  res = cli.Post("/api/labels", "{not json", "application/json");
  EXPECT_EQ(res->status, 400);
  res = cli.Get("/api/tasks/next?annotator=nobody");
  EXPECT_EQ(res->status, 404);

  res = cli.Get("/api/progress");
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body)["labels"], 1);
  res = cli.Get("/api/export");
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(res->body.find("secret-"), std::string::npos);
  const auto rows = json::parse(res->body);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0]["verdict"], "A");
}

TEST_F(AnnotationHttp, DoneWhenExhausted) {
  auto cli = client();
  for (int i = 0; i < 4; ++i) ASSERT_EQ(cli.Get("/api/tasks/next?annotator=ann3")->status, 200);
  const auto res = cli.Get("/api/tasks/next?annotator=ann3");
  ASSERT_TRUE(res);
  EXPECT_EQ(json::parse(res->body)["done"], true);
  EXPECT_EQ(cli.Get("/")->status, 200);
}
