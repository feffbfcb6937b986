#pragma once

// Structural comparison of plan pairs: node/edge count deltas and graph edit
// distance over directed graphs.
//
// The edit model matches each node of the first graph to a distinct node of
// the second or deletes it; unmatched nodes of the second graph are inserted.
// Edge costs follow from the node mapping: an edge whose image exists is
// substituted, otherwise deleted; edges of the second graph with no preimage
// are inserted.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "convplan/plan.hpp"

namespace convplan {

struct GedCostModel {
  double node_insert = 1.0;
  double node_delete = 1.0;
  /// Null means label-agnostic (cost 0).
  std::function<double(const std::string&, const std::string&)> node_substitute;
  double edge_insert = 1.0;
  double edge_delete = 1.0;
  double edge_substitute = 0.0;

  /// Substitution costs 1 when names differ after lowercasing and whitespace
  /// collapse.
  static GedCostModel label_aware();

  void validate() const;
};

struct GedResult {
  double cost = 0.0;
  bool exact = false;
  std::size_t expansions = 0;
  bool budget_exhausted = false;
};

inline constexpr std::size_t kDefaultExactThreshold = 10;
inline constexpr std::size_t kDefaultGedBudget = 20000;

std::size_t node_delta(const Plan& a, const Plan& b);
std::size_t edge_delta(const Plan& a, const Plan& b);

/// Simple directed graph view of a plan: node i is plan.nodes[i]; edges with a
/// missing endpoint are ignored and, for duplicate ids, the first node wins.
struct Digraph {
  std::vector<std::string> labels;
  std::vector<std::vector<char>> adj;
  std::size_t edge_count = 0;

  static Digraph from_plan(const Plan& plan);
  std::size_t size() const { return labels.size(); }
};

/// Optimal cost by A* over partial node assignments. Throws SizeLimitExceeded
/// when the combined node count exceeds `exact_threshold`.
GedResult ged_exact(const Plan& a, const Plan& b, const GedCostModel& costs = {},
                    std::size_t exact_threshold = kDefaultExactThreshold);
GedResult ged_exact(const Digraph& a, const Digraph& b, const GedCostModel& costs = {},
                    std::size_t exact_threshold = kDefaultExactThreshold);

/// Anytime search: a greedy dive gives a first complete edit path, then
/// depth-first branch and bound improves it until `budget` expansions are
/// spent. exact = true iff the search space was exhausted.
GedResult ged_approx(const Plan& a, const Plan& b, const GedCostModel& costs = {},
                     std::size_t budget = kDefaultGedBudget);
GedResult ged_approx(const Digraph& a, const Digraph& b, const GedCostModel& costs = {},
                     std::size_t budget = kDefaultGedBudget);

/// ged_exact when the pair fits under the threshold, ged_approx otherwise.
GedResult ged(const Plan& a, const Plan& b, const GedCostModel& costs = {},
              std::size_t exact_threshold = kDefaultExactThreshold,
              std::size_t budget = kDefaultGedBudget);

}  // namespace convplan
