#include "convplan/plan.hpp"

#include <algorithm>
#include <map>
#include <queue>
#include <set>

#include "convplan/error.hpp"
#include "convplan/prompts.hpp"

namespace convplan {

std::string render_planner_prompt(std::string_view rewrite_text) {
  return prompts::render(prompts::kPlannerTemplate, {{"input", std::string(rewrite_text)}});
}

std::string generate_plan(const Rewrite& rewrite, const Gateway& gateway,
                          const std::string& planner_model_id) {
  try {
    return gateway
        .complete(ChatRequest::single(planner_model_id, render_planner_prompt(rewrite.text), 0.0))
        .text;
  } catch (const Error& e) {
    throw Error(ErrorCode::kPlanGenerationFailed,
                rewrite.conversation_id + "/" + rewrite.rewriter_id + ": " + e.what(), e.code());
  }
}

namespace {

long integer_id(const json& v, std::string_view what) {
  if (!v.is_number_integer()) {
    throw Error(ErrorCode::kSchemaError, std::string(what) + " must be an integer, got " + v.dump());
  }
  return v.get<long>();
}

Plan plan_from_graph_json(const json& obj) {
  if (!obj.contains("nodes") || !obj["nodes"].is_array()) {
    throw Error(ErrorCode::kSchemaError, "plan lacks a 'nodes' array");
  }
  if (!obj.contains("edges") || !obj["edges"].is_array()) {
    throw Error(ErrorCode::kSchemaError, "plan lacks an 'edges' array");
  }
  Plan plan;
  for (const auto& n : obj["nodes"]) {
    if (!n.is_object() || !n.contains("id") || !n.contains("name")) {
      throw Error(ErrorCode::kSchemaError, "plan node needs 'id' and 'name': " + n.dump());
    }
    if (!n["name"].is_string() || trim(n["name"].get<std::string>()).empty()) {
      throw Error(ErrorCode::kSchemaError, "plan node name must be a non-empty string");
    }
    plan.nodes.push_back({integer_id(n["id"], "node id"), n["name"].get<std::string>()});
  }
  std::set<PlanEdge> seen;
  for (const auto& e : obj["edges"]) {
    if (!e.is_array() || e.size() != 2) {
      throw Error(ErrorCode::kSchemaError, "edge must be a 2-element array, got " + e.dump());
    }
    PlanEdge edge{integer_id(e[0], "edge endpoint"), integer_id(e[1], "edge endpoint")};
    if (!seen.insert(edge).second) {
      ++plan.duplicate_edges_removed;
      continue;
    }
    plan.edges.push_back(edge);
  }
  return plan;
}

}  // namespace

Plan parse_plan(std::string_view raw) {
  auto obj = extract_first_json_object(raw);
  if (!obj) throw Error(ErrorCode::kNoJsonFound, "no JSON object in planner output");
  return plan_from_graph_json(*obj);
}

json plan_graph_json(const Plan& plan) {
  json nodes = json::array();
  for (const auto& n : plan.nodes) nodes.push_back({{"id", n.id}, {"name", n.name}});
  json edges = json::array();
  for (const auto& [a, b] : plan.edges) edges.push_back(json::array({a, b}));
  return {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

std::string serialize_plan(const Plan& plan) { return plan_graph_json(plan).dump(); }

std::string_view to_string(DagViolationKind kind) {
  switch (kind) {
    case DagViolationKind::kDuplicateId: return "duplicate_id";
    case DagViolationKind::kDanglingEdge: return "dangling_edge";
    case DagViolationKind::kCycle: return "cycle";
  }
  return "?";
}

bool DagValidation::has(DagViolationKind kind) const {
  return std::any_of(violations.begin(), violations.end(),
                     [kind](const DagViolation& v) { return v.kind == kind; });
}

namespace {

/// Kahn's algorithm over distinct ids and edges whose endpoints exist. Returns
/// the ids that could not be ordered (empty iff acyclic) and the order.
std::pair<std::vector<long>, std::vector<long>> kahn(const Plan& plan) {
  std::map<long, std::size_t> indegree;
  for (const auto& n : plan.nodes) indegree.emplace(n.id, 0);
  std::map<long, std::vector<long>> out;
  for (const auto& [a, b] : plan.edges) {
    if (!indegree.count(a) || !indegree.count(b)) continue;
    out[a].push_back(b);
    ++indegree[b];
  }
  // Ascending-id tie-break keeps the order deterministic.
  std::priority_queue<long, std::vector<long>, std::greater<>> ready;
  for (const auto& [id, d] : indegree) {
    if (d == 0) ready.push(id);
  }
  std::vector<long> order;
  while (!ready.empty()) {
    const long id = ready.top();
    ready.pop();
    order.push_back(id);
    for (long next : out[id]) {
      if (--indegree[next] == 0) ready.push(next);
    }
  }
  std::vector<long> stuck;
  for (const auto& [id, d] : indegree) {
    if (d > 0) stuck.push_back(id);
  }
  return {stuck, order};
}

}  // namespace

DagValidation validate_dag(const Plan& plan) {
  DagValidation result;
  std::map<long, int> counts;
  for (const auto& n : plan.nodes) ++counts[n.id];
  for (const auto& [id, c] : counts) {
    if (c > 1) {
      result.violations.push_back({DagViolationKind::kDuplicateId,
                                   "node id " + std::to_string(id) + " appears " +
                                       std::to_string(c) + " times"});
    }
  }
  for (const auto& [a, b] : plan.edges) {
    if (!counts.count(a) || !counts.count(b)) {
      result.violations.push_back({DagViolationKind::kDanglingEdge,
                                   "edge (" + std::to_string(a) + ", " + std::to_string(b) +
                                       ") references a missing node"});
    }
  }
  const auto [stuck, order] = kahn(plan);
  if (!stuck.empty()) {
    std::vector<std::string> ids;
    for (long id : stuck) ids.push_back(std::to_string(id));
    result.violations.push_back(
        {DagViolationKind::kCycle, "nodes on or behind a cycle: " + join(ids, ", ")});
  }
  return result;
}

std::optional<std::vector<long>> topological_order(const Plan& plan) {
  auto [stuck, order] = kahn(plan);
  if (!stuck.empty()) return std::nullopt;
  return order;
}

json to_json(const Plan& plan) {
  const auto validation = validate_dag(plan);
  json violations = json::array();
  for (const auto& v : validation.violations) {
    violations.push_back({{"kind", to_string(v.kind)}, {"detail", v.detail}});
  }
  auto g = plan_graph_json(plan);
  return {{"conversation_id", plan.conversation_id},
          {"rewriter_id", plan.rewriter_id},
          {"planner_model_id", plan.planner_model_id},
          {"nodes", std::move(g["nodes"])},
          {"edges", std::move(g["edges"])},
          {"valid", validation.valid()},
          {"violations", std::move(violations)},
          {"duplicate_edges_removed", plan.duplicate_edges_removed}};
}

Plan plan_from_json(const json& j) {
  Plan plan = plan_from_graph_json(j);
  plan.conversation_id = j.value("conversation_id", std::string());
  plan.rewriter_id = j.value("rewriter_id", std::string());
  plan.planner_model_id = j.value("planner_model_id", std::string());
  plan.duplicate_edges_removed += j.value("duplicate_edges_removed", std::size_t{0});
  return plan;
}

}  // namespace convplan
