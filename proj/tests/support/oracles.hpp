#pragma once

// Test-side reference implementations, written independently of the library
// algorithms they check: exhaustive edit-path enumeration for graph edit
// distance, permutation search for acyclicity, and random DAG generators.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "convplan/plan.hpp"

namespace oracle {

struct Graph {
  std::vector<std::string> labels;
  std::set<std::pair<int, int>> edges;  // indices into labels
};

inline Graph from_plan(const convplan::Plan& p) {
  Graph g;
  std::vector<long> ids;
  for (const auto& n : p.nodes) {
    ids.push_back(n.id);
    g.labels.push_back(n.name);
  }
  auto idx = [&](long id) {
    return static_cast<int>(std::find(ids.begin(), ids.end(), id) - ids.begin());
  };
  for (const auto& [a, b] : p.edges) g.edges.insert({idx(a), idx(b)});
  return g;
}

/// Minimum unit-cost edit distance by trying every injective partial mapping
/// of g1's nodes into g2's nodes. Node substitution costs `relabel` when
/// labels differ (0 ignores labels); edges cost 1 to insert or delete.
inline double brute_force_ged(const Graph& g1, const Graph& g2, double relabel = 0.0) {
  const int n1 = static_cast<int>(g1.labels.size());
  const int n2 = static_cast<int>(g2.labels.size());
  std::vector<int> map(n1, -1);
  std::vector<bool> used(n2, false);
  double best = std::numeric_limits<double>::infinity();

  auto score = [&] {
    double cost = 0.0;
    int mapped = 0;
    for (int u = 0; u < n1; ++u) {
      if (map[u] < 0) {
        cost += 1.0;
      } else {
        ++mapped;
        if (g1.labels[u] != g2.labels[map[u]]) cost += relabel;
      }
    }
    cost += n2 - mapped;
    std::set<std::pair<int, int>> image;
    for (const auto& [a, b] : g1.edges) {
      if (map[a] >= 0 && map[b] >= 0 && g2.edges.count({map[a], map[b]})) {
        image.insert({map[a], map[b]});
      } else {
        cost += 1.0;
      }
    }
    cost += static_cast<double>(g2.edges.size() - image.size());
    return cost;
  };

  std::function<void(int)> rec = [&](int u) {
    if (u == n1) {
      best = std::min(best, score());
      return;
    }
    map[u] = -1;
    rec(u + 1);
    for (int v = 0; v < n2; ++v) {
      if (used[v]) continue;
      used[v] = true;
      map[u] = v;
      rec(u + 1);
      used[v] = false;
      map[u] = -1;
    }
  };
  rec(0);
  return best;
}

inline double brute_force_ged(const convplan::Plan& a, const convplan::Plan& b, double relabel = 0.0) {
  return brute_force_ged(from_plan(a), from_plan(b), relabel);
}

/// True if some ordering of the nodes puts every edge forward.
inline bool acyclic_by_permutation(const convplan::Plan& p) {
  std::vector<long> ids;
  for (const auto& n : p.nodes) ids.push_back(n.id);
  std::sort(ids.begin(), ids.end());
  do {
    auto pos = [&](long id) { return std::find(ids.begin(), ids.end(), id) - ids.begin(); };
    bool ok = true;
    for (const auto& [a, b] : p.edges) {
      if (pos(a) >= pos(b)) {
        ok = false;
        break;
      }
    }
    if (ok) return true;
  } while (std::next_permutation(ids.begin(), ids.end()));
  return false;
}

inline const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> words{"search flights", "compare prices", "book hotel",
                                              "pick dates",     "confirm order",  "check menu",
                                              "reserve table",  "send summary"};
  return words;
}

/// Random DAG with up to `max_nodes` nodes; ids are shuffled so that id order
/// does not reveal the topological order.
inline convplan::Plan random_dag(std::mt19937_64& rng, int max_nodes, double edge_p = 0.4,
                              bool allow_empty = true) {
  std::uniform_int_distribution<int> size(allow_empty ? 0 : 1, max_nodes);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> word(0, vocabulary().size() - 1);
  const int n = size(rng);
  std::vector<long> ids(n);
  std::iota(ids.begin(), ids.end(), 1);
  std::shuffle(ids.begin(), ids.end(), rng);
  convplan::Plan p;
  for (int i = 0; i < n; ++i) p.nodes.push_back({ids[i], vocabulary()[word(rng)]});
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      if (coin(rng) < edge_p) p.edges.push_back({ids[i], ids[j]});
    }
  }
  return p;
}

/// Random directed graph (cycles and self-loops allowed) over distinct ids.
inline convplan::Plan random_digraph(std::mt19937_64& rng, int max_nodes, double edge_p = 0.25) {
  std::uniform_int_distribution<int> size(1, max_nodes);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const int n = size(rng);
  convplan::Plan p;
  for (int i = 1; i <= n; ++i) p.nodes.push_back({i, "step " + std::to_string(i)});
  for (int i = 1; i <= n; ++i) {
    for (int j = 1; j <= n; ++j) {
      if (coin(rng) < (i == j ? edge_p / 4 : edge_p)) p.edges.push_back({i, j});
    }
  }
  return p;
}

}  // namespace oracle
