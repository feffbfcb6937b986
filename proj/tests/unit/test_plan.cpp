#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "convplan/plan.hpp"
#include "test_util.hpp"

using namespace convplan;

TEST(PlanParse, ToleratesProseAndFences) {
  const auto p = parse_plan(
      "Here is the plan:\n```json\n{\"nodes\":[{\"id\":1,\"name\":\"Find\"},{\"id\":2,\"name\":\"Book\"}],"
      "\"edges\":[[1,2]]}\n```\nGood luck.");
  ASSERT_EQ(p.node_count(), 2u);
  EXPECT_EQ(p.nodes[1].name, "Book");
  ASSERT_EQ(p.edge_count(), 1u);
  EXPECT_EQ(p.edges[0], (PlanEdge{1, 2}));
  EXPECT_TRUE(validate_dag(p).valid());
}

TEST(PlanParse, Errors) {
  EXPECT_CONVPLAN_ERROR(parse_plan("no braces at all"), ErrorCode::kNoJsonFound);
  EXPECT_CONVPLAN_ERROR(parse_plan(R"({"edges":[]})"), ErrorCode::kSchemaError);
  EXPECT_CONVPLAN_ERROR(parse_plan(R"({"nodes":[{"id":"a","name":"x"}],"edges":[]})"),
                     ErrorCode::kSchemaError);
  EXPECT_CONVPLAN_ERROR(parse_plan(R"({"nodes":[{"id":1,"name":"x"}],"edges":[[1]]})"),
                     ErrorCode::kSchemaError);
}

TEST(PlanParse, DuplicateEdgesDropped) {
  const auto p =
      parse_plan(R"({"nodes":[{"id":1,"name":"a"},{"id":2,"name":"b"}],"edges":[[1,2],[1,2]]})");
  EXPECT_EQ(p.edge_count(), 1u);
  EXPECT_EQ(p.duplicate_edges_removed, 1u);
}

TEST(DagValidation, Cycle) {
  const auto p = parse_plan(
      R"({"nodes":[{"id":1,"name":"a"},{"id":2,"name":"b"},{"id":3,"name":"c"}],"edges":[[1,2],[2,3],[3,1]]})");
  const auto v = validate_dag(p);
  EXPECT_TRUE(v.has(DagViolationKind::kCycle));
  EXPECT_FALSE(topological_order(p).has_value());
}

TEST(DagValidation, SelfLoopIsCycle) {
  const auto p = parse_plan(R"({"nodes":[{"id":1,"name":"a"}],"edges":[[1,1]]})");
  EXPECT_TRUE(validate_dag(p).has(DagViolationKind::kCycle));
}

TEST(DagValidation, DanglingEdge) {
  const auto p = parse_plan(R"({"nodes":[{"id":1,"name":"a"}],"edges":[[1,9]]})");
  const auto v = validate_dag(p);
  EXPECT_TRUE(v.has(DagViolationKind::kDanglingEdge));
  EXPECT_FALSE(v.has(DagViolationKind::kCycle));
}

TEST(DagValidation, DuplicateId) {
  const auto p = parse_plan(R"({"nodes":[{"id":1,"name":"a"},{"id":1,"name":"b"}],"edges":[]})");
  EXPECT_TRUE(validate_dag(p).has(DagViolationKind::kDuplicateId));
}

TEST(DagValidation, EmptyPlanIsValid) {
  EXPECT_TRUE(validate_dag(parse_plan(R"({"nodes":[],"edges":[]})")).valid());
}

TEST(DagValidation, AgreesWithPermutationOracle) {
  std::mt19937_64 rng(99);
  for (int i = 0; i < 400; ++i) {
    const auto p = oracle::random_digraph(rng, 6);
    const bool acyclic = oracle::acyclic_by_permutation(p);
    EXPECT_EQ(validate_dag(p).valid(), acyclic) << serialize_plan(p);
    EXPECT_EQ(topological_order(p).has_value(), acyclic);
  }
}

TEST(DagValidation, TopologicalOrderRespectsEdges) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const auto p = oracle::random_dag(rng, 8);
    const auto order = topological_order(p);
    ASSERT_TRUE(order.has_value());
    std::map<long, std::size_t> pos;
    for (std::size_t k = 0; k < order->size(); ++k) pos[(*order)[k]] = k;
    for (const auto& [a, b] : p.edges) EXPECT_LT(pos[a], pos[b]);
  }
}

TEST(PlanJson, RoundTrip) {
  auto p = parse_plan(R"({"nodes":[{"id":4,"name":"x"},{"id":2,"name":"y"}],"edges":[[4,2]]})");
  p.conversation_id = "c1";
  p.rewriter_id = "basic";
  p.planner_model_id = "m";
  const auto back = plan_from_json(to_json(p));
  EXPECT_TRUE(back.same_graph(p));
  EXPECT_EQ(back.conversation_id, "c1");
  EXPECT_EQ(back.rewriter_id, "basic");
  EXPECT_TRUE(parse_plan(serialize_plan(p)).same_graph(p));
}

TEST(Planner, GenerateUsesRewriteText) {
  MockRule r;
  r.pattern = "UNIQUE-REWRITE-MARKER";
  r.response = R"({"nodes":[{"id":1,"name":"go"}],"edges":[]})";
  Gateway gw(testutil::mock({r}));
  Rewrite rw{"c", "basic", "UNIQUE-REWRITE-MARKER", std::nullopt};
  EXPECT_EQ(parse_plan(generate_plan(rw, gw, "planner")).node_count(), 1u);
  Gateway none(testutil::mock({}));
  EXPECT_CONVPLAN_ERROR(generate_plan(rw, none, "planner"), ErrorCode::kPlanGenerationFailed);
}
