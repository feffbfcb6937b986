#include "convplan/ged.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <queue>

#include "convplan/error.hpp"

namespace convplan {

GedCostModel GedCostModel::label_aware() {
  GedCostModel m;
  m.node_substitute = [](const std::string& a, const std::string& b) {
    return normalize_label(a) == normalize_label(b) ? 0.0 : 1.0;
  };
  return m;
}

void GedCostModel::validate() const {
  for (double c : {node_insert, node_delete, edge_insert, edge_delete, edge_substitute}) {
    if (!(c >= 0.0) || !std::isfinite(c)) {
      throw Error(ErrorCode::kInvalidArgument, "GED costs must be finite and >= 0");
    }
  }
}

std::size_t node_delta(const Plan& a, const Plan& b) {
  return a.node_count() > b.node_count() ? a.node_count() - b.node_count()
                                         : b.node_count() - a.node_count();
}

std::size_t edge_delta(const Plan& a, const Plan& b) {
  return a.edge_count() > b.edge_count() ? a.edge_count() - b.edge_count()
                                         : b.edge_count() - a.edge_count();
}

Digraph Digraph::from_plan(const Plan& plan) {
  Digraph g;
  std::map<long, std::size_t> index;
  for (const auto& n : plan.nodes) {
    index.emplace(n.id, g.labels.size());
    g.labels.push_back(n.name);
  }
  g.adj.assign(g.labels.size(), std::vector<char>(g.labels.size(), 0));
  for (const auto& [a, b] : plan.edges) {
    auto ia = index.find(a);
    auto ib = index.find(b);
    if (ia == index.end() || ib == index.end()) continue;
    if (!g.adj[ia->second][ib->second]) {
      g.adj[ia->second][ib->second] = 1;
      ++g.edge_count;
    }
  }
  return g;
}

namespace {

constexpr int kDeleted = -1;
constexpr double kEps = 1e-9;

struct SearchState {
  std::vector<int> mapping;  // mapping[k] = image of order[k], or kDeleted
  std::vector<char> used;    // G2 nodes already matched
  std::size_t used_count = 0;
  double g = 0.0;
  double f = 0.0;
  std::size_t resolved1 = 0;  // G1 edges whose endpoints are both processed
  std::size_t resolved2 = 0;  // G2 edges whose endpoints are both images
};

class EditSearch {
 public:
  EditSearch(const Digraph& a, const Digraph& b, const GedCostModel& costs)
      : g1_(a), g2_(b), costs_(costs), order_(a.size()) {
    costs_.validate();
    sub_.assign(a.size(), std::vector<double>(b.size(), 0.0));
    if (costs_.node_substitute) {
      for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = 0; j < b.size(); ++j) {
          const double c = costs_.node_substitute(a.labels[i], b.labels[j]);
          if (!(c >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "substitution cost < 0");
          sub_[i][j] = c;
        }
      }
    }
    // High-degree nodes first: their edge costs resolve early and tighten f.
    std::vector<std::size_t> degree(a.size(), 0);
    for (std::size_t i = 0; i < a.size(); ++i) {
      for (std::size_t j = 0; j < a.size(); ++j) {
        if (a.adj[i][j]) {
          ++degree[i];
          ++degree[j];
        }
      }
    }
    std::iota(order_.begin(), order_.end(), 0);
    std::stable_sort(order_.begin(), order_.end(),
                     [&](std::size_t x, std::size_t y) { return degree[x] > degree[y]; });
  }

  SearchState root() const {
    SearchState s;
    s.used.assign(g2_.size(), 0);
    if (g1_.size() == 0) complete(s);
    s.f = s.g + heuristic(s);
    return s;
  }

  bool is_complete(const SearchState& s) const { return s.mapping.size() == g1_.size(); }

  std::vector<SearchState> children(const SearchState& s) const {
    std::vector<SearchState> out;
    out.reserve(g2_.size() - s.used_count + 1);
    for (std::size_t v = 0; v < g2_.size(); ++v) {
      if (!s.used[v]) out.push_back(extend(s, static_cast<int>(v)));
    }
    out.push_back(extend(s, kDeleted));
    return out;
  }

 private:
  SearchState extend(const SearchState& s, int v) const {
    SearchState c = s;
    const std::size_t k = s.mapping.size();
    const std::size_t u = order_[k];
    c.mapping.push_back(v);
    if (v == kDeleted) {
      c.g += costs_.node_delete;
    } else {
      c.g += sub_[u][static_cast<std::size_t>(v)];
      c.used[static_cast<std::size_t>(v)] = 1;
      ++c.used_count;
    }
    // Edges between u and every processed node, plus u's self-loop.
    for (std::size_t j = 0; j <= k; ++j) {
      const std::size_t up = order_[j];
      const int vp = c.mapping[j];
      const bool self = j == k;
      resolve_edge(c, u, up, v, vp);
      if (!self) resolve_edge(c, up, u, vp, v);
    }
    if (is_complete(c)) complete(c);
    c.f = c.g + heuristic(c);
    return c;
  }

  // Edge (x -> y) in G1 and, when both images exist, (vx -> vy) in G2.
  void resolve_edge(SearchState& c, std::size_t x, std::size_t y, int vx, int vy) const {
    const bool in1 = g1_.adj[x][y] != 0;
    const bool mapped = vx != kDeleted && vy != kDeleted;
    const bool in2 = mapped && g2_.adj[static_cast<std::size_t>(vx)][static_cast<std::size_t>(vy)];
    if (in1) {
      ++c.resolved1;
      c.g += in2 ? costs_.edge_substitute : costs_.edge_delete;
    }
    if (in2) {
      ++c.resolved2;
      if (!in1) c.g += costs_.edge_insert;
    }
  }

  void complete(SearchState& c) const {
    c.g += static_cast<double>(g2_.size() - c.used_count) * costs_.node_insert;
    c.g += static_cast<double>(g2_.edge_count - c.resolved2) * costs_.edge_insert;
    c.resolved2 = g2_.edge_count;
  }

  double heuristic(const SearchState& s) const {
    if (is_complete(s)) return 0.0;
    const double n1 = static_cast<double>(g1_.size() - s.mapping.size());
    const double n2 = static_cast<double>(g2_.size() - s.used_count);
    const double e1 = static_cast<double>(g1_.edge_count - s.resolved1);
    const double e2 = static_cast<double>(g2_.edge_count - s.resolved2);
    const double nodes = n1 > n2 ? (n1 - n2) * costs_.node_delete : (n2 - n1) * costs_.node_insert;
    const double edges = e1 > e2 ? (e1 - e2) * costs_.edge_delete : (e2 - e1) * costs_.edge_insert;
    return nodes + edges;
  }

  const Digraph& g1_;
  const Digraph& g2_;
  GedCostModel costs_;
  std::vector<std::size_t> order_;
  std::vector<std::vector<double>> sub_;
};

struct ByF {
  bool operator()(const SearchState& a, const SearchState& b) const {
    if (std::abs(a.f - b.f) > kEps) return a.f > b.f;
    return a.mapping.size() < b.mapping.size();  // deeper first on ties
  }
};

}  // namespace

GedResult ged_exact(const Digraph& a, const Digraph& b, const GedCostModel& costs,
                    std::size_t exact_threshold) {
  if (a.size() + b.size() > exact_threshold) {
    throw Error(ErrorCode::kSizeLimitExceeded,
                std::to_string(a.size() + b.size()) + " combined nodes exceeds exact threshold " +
                    std::to_string(exact_threshold));
  }
  EditSearch search(a, b, costs);
  std::priority_queue<SearchState, std::vector<SearchState>, ByF> open;
  open.push(search.root());
  GedResult result;
  result.exact = true;
  while (!open.empty()) {
    SearchState s = open.top();
    open.pop();
    if (search.is_complete(s)) {
      result.cost = s.g;
      return result;
    }
    ++result.expansions;
    for (auto& c : search.children(s)) open.push(std::move(c));
  }
  throw Error(ErrorCode::kInvalidArgument, "GED search ended without a complete edit path");
}

GedResult ged_exact(const Plan& a, const Plan& b, const GedCostModel& costs,
                    std::size_t exact_threshold) {
  return ged_exact(Digraph::from_plan(a), Digraph::from_plan(b), costs, exact_threshold);
}

GedResult ged_approx(const Digraph& a, const Digraph& b, const GedCostModel& costs,
                     std::size_t budget) {
  if (budget == 0) throw Error(ErrorCode::kInvalidArgument, "GED budget must be > 0");
  EditSearch search(a, b, costs);
  GedResult result;

  // Greedy dive: always completes so there is a finite upper bound.
  SearchState s = search.root();
  while (!search.is_complete(s)) {
    ++result.expansions;
    auto kids = search.children(s);
    s = std::move(*std::min_element(kids.begin(), kids.end(), [](const auto& x, const auto& y) {
      return x.f < y.f - kEps;
    }));
  }
  double best = s.g;

  // Depth-first branch and bound from the root.
  std::vector<SearchState> stack;
  stack.push_back(search.root());
  while (!stack.empty()) {
    if (result.expansions >= budget) {
      result.budget_exhausted = true;
      break;
    }
    SearchState cur = std::move(stack.back());
    stack.pop_back();
    if (cur.f >= best - kEps) continue;
    if (search.is_complete(cur)) {
      best = cur.g;
      continue;
    }
    ++result.expansions;
    auto kids = search.children(cur);
    // Push worst first so the most promising child is explored next.
    std::sort(kids.begin(), kids.end(), [](const auto& x, const auto& y) { return x.f > y.f; });
    for (auto& k : kids) {
      if (k.f < best - kEps) stack.push_back(std::move(k));
    }
  }
  result.cost = best;
  result.exact = !result.budget_exhausted;
  return result;
}

GedResult ged_approx(const Plan& a, const Plan& b, const GedCostModel& costs, std::size_t budget) {
  return ged_approx(Digraph::from_plan(a), Digraph::from_plan(b), costs, budget);
}

GedResult ged(const Plan& a, const Plan& b, const GedCostModel& costs, std::size_t exact_threshold,
              std::size_t budget) {
  if (a.node_count() + b.node_count() <= exact_threshold) {
    return ged_exact(a, b, costs, exact_threshold);
  }
  return ged_approx(a, b, costs, budget);
}

}  // namespace convplan
