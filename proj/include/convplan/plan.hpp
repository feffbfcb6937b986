#pragma once

// Plan DAGs: planner invocation, tolerant parsing of model output, and
// structural validation.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "convplan/core.hpp"
#include "convplan/gateway.hpp"

namespace convplan {

struct PlanNode {
  long id = 0;
  std::string name;

  bool operator==(const PlanNode&) const = default;
};

using PlanEdge = std::pair<long, long>;

struct Plan {
  std::vector<PlanNode> nodes;
  std::vector<PlanEdge> edges;
  std::string conversation_id;
  std::string rewriter_id;
  std::string planner_model_id;
  /// Identical edge pairs dropped during parsing.
  std::size_t duplicate_edges_removed = 0;

  std::size_t node_count() const { return nodes.size(); }
  std::size_t edge_count() const { return edges.size(); }

  /// Structural equality (nodes and edges only).
  bool same_graph(const Plan& other) const {
    return nodes == other.nodes && edges == other.edges;
  }
};

std::string render_planner_prompt(std::string_view rewrite_text);

/// Raw planner output for a rewrite, at temperature 0.
std::string generate_plan(const Rewrite& rewrite, const Gateway& gateway,
                          const std::string& planner_model_id);

/// Extracts the first JSON object from `raw` (prose and code fences tolerated)
/// and reads `nodes` / `edges`. Throws NoJsonFound or SchemaError.
Plan parse_plan(std::string_view raw);

/// {"nodes":[{"id":..,"name":..}],"edges":[[a,b],..]}
json plan_graph_json(const Plan& plan);
std::string serialize_plan(const Plan& plan);

enum class DagViolationKind { kDuplicateId, kDanglingEdge, kCycle };

struct DagViolation {
  DagViolationKind kind;
  std::string detail;
};

std::string_view to_string(DagViolationKind kind);

struct DagValidation {
  std::vector<DagViolation> violations;

  bool valid() const { return violations.empty(); }
  bool has(DagViolationKind kind) const;
};

/// Duplicate ids, dangling edge endpoints, and cycles (Kahn's algorithm over
/// the well-formed edges; self-loops count as cycles).
DagValidation validate_dag(const Plan& plan);

/// Node ids in a topological order, or nullopt if the plan has a cycle.
std::optional<std::vector<long>> topological_order(const Plan& plan);

/// Plan JSONL row including validity and violations.
json to_json(const Plan& plan);
Plan plan_from_json(const json& j);

}  // namespace convplan
