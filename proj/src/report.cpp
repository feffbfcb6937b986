#include "convplan/report.hpp"

#include <algorithm>
#include <sstream>

#include <spdlog/fmt/fmt.h>

#include "convplan/error.hpp"

namespace fs = std::filesystem;

namespace convplan {

namespace {

constexpr const char* kPalette[] = {"#4e79a7", "#f28e2b", "#59a14f", "#e15759",
                                    "#76b7b2", "#edc948", "#b07aa1", "#9c755f"};
constexpr const char* kWin = "#59a14f";
constexpr const char* kTie = "#bab0ac";
constexpr const char* kLoss = "#e15759";

std::string num(double v) { return fmt::format("{:.4f}", v); }

std::string esc(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

class Svg {
 public:
  Svg(int w, int h) : w_(w), h_(h) {}

  void rect(double x, double y, double w, double h, std::string_view fill) {
    body_ << fmt::format(R"(<rect x="{:.1f}" y="{:.1f}" width="{:.1f}" height="{:.1f}" fill="{}"/>)",
                         x, y, w, h, fill)
          << '\n';
  }
  void line(double x1, double y1, double x2, double y2, std::string_view stroke, double width = 1) {
    body_ << fmt::format(
                 R"(<line x1="{:.1f}" y1="{:.1f}" x2="{:.1f}" y2="{:.1f}" stroke="{}" stroke-width="{}"/>)",
                 x1, y1, x2, y2, stroke, width)
          << '\n';
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, std::string_view stroke) {
    body_ << R"(<polyline fill="none" stroke-width="2" stroke=")" << stroke << R"(" points=")";
    for (const auto& [x, y] : pts) body_ << fmt::format("{:.1f},{:.1f} ", x, y);
    body_ << "\"/>\n";
    for (const auto& [x, y] : pts) {
      body_ << fmt::format(R"(<circle cx="{:.1f}" cy="{:.1f}" r="3" fill="{}"/>)", x, y, stroke)
            << '\n';
    }
  }
  void text(double x, double y, std::string_view s, std::string_view anchor = "start",
            int size = 12) {
    body_ << fmt::format(R"(<text x="{:.1f}" y="{:.1f}" font-size="{}" text-anchor="{}">{}</text>)",
                         x, y, size, anchor, esc(s))
          << '\n';
  }
  std::string str() const {
    return fmt::format(
               R"(<svg xmlns="http://www.w3.org/2000/svg" width="{0}" height="{1}" viewBox="0 0 {0} {1}" font-family="sans-serif">)",
               w_, h_) +
           "\n" + R"(<rect width="100%" height="100%" fill="white"/>)" + "\n" + body_.str() +
           "</svg>\n";
  }

 private:
  int w_;
  int h_;
  std::ostringstream body_;
};

std::string wtl_svg(const WtlTable& total) {
  const int bar = 28;
  const int left = 140;
  const int width = 420;
  const int h = 70 + static_cast<int>(total.rows.size()) * (bar + 12);
  Svg svg(left + width + 40, h);
  svg.text(10, 22, "Win / tie / loss rate per rewriter (%)", "start", 14);
  double y = 40;
  for (const auto& r : total.rows) {
    svg.text(left - 8, y + bar * 0.65, r.rewriter, "end");
    double x = left;
    for (const auto& [pct, color] :
         {std::pair{r.win_pct, kWin}, std::pair{r.tie_pct, kTie}, std::pair{r.loss_pct, kLoss}}) {
      const double w = width * pct / 100.0;
      svg.rect(x, y, w, bar, color);
      if (pct >= 8.0) svg.text(x + w / 2, y + bar * 0.65, fmt::format("{:.1f}", pct), "middle", 11);
      x += w;
    }
    svg.text(left + width + 6, y + bar * 0.65, fmt::format("n={}", r.comparisons), "start", 10);
    y += bar + 12;
  }
  double lx = left;
  for (const auto& [label, color] : {std::pair{"win", kWin}, std::pair{"tie", kTie},
                                     std::pair{"loss", kLoss}}) {
    svg.rect(lx, y + 4, 12, 12, color);
    svg.text(lx + 16, y + 14, label);
    lx += 70;
  }
  return svg.str();
}

std::string rank_svg(const std::map<std::string, std::vector<std::size_t>>& hist,
                     const std::vector<std::string>& order, std::size_t ranks) {
  const int left = 50;
  const int plot_w = 480;
  const int plot_h = 220;
  const int top = 40;
  Svg svg(left + plot_w + 150, top + plot_h + 50);
  svg.text(10, 22, "Rank distribution per rewriter", "start", 14);
  std::size_t max_count = 1;
  for (const auto& [id, counts] : hist) {
    for (auto c : counts) max_count = std::max(max_count, c);
  }
  const double group_w = static_cast<double>(plot_w) / static_cast<double>(std::max<std::size_t>(1, ranks));
  const double bar_w = group_w * 0.8 / static_cast<double>(std::max<std::size_t>(1, order.size()));
  svg.line(left, top + plot_h, left + plot_w, top + plot_h, "#333");
  svg.line(left, top, left, top + plot_h, "#333");
  svg.text(left - 6, top + 4, std::to_string(max_count), "end", 10);
  svg.text(left - 6, top + plot_h, "0", "end", 10);
  for (std::size_t r = 0; r < ranks; ++r) {
    const double gx = left + group_w * static_cast<double>(r) + group_w * 0.1;
    for (std::size_t k = 0; k < order.size(); ++k) {
      auto it = hist.find(order[k]);
      const auto count = it == hist.end() ? 0 : it->second[r];
      const double bh = plot_h * static_cast<double>(count) / static_cast<double>(max_count);
      svg.rect(gx + bar_w * static_cast<double>(k), top + plot_h - bh, bar_w * 0.95, bh,
               kPalette[k % std::size(kPalette)]);
    }
    svg.text(gx + group_w * 0.4, top + plot_h + 18, "rank " + std::to_string(r + 1), "middle");
  }
  for (std::size_t k = 0; k < order.size(); ++k) {
    const double ly = top + 10 + 20.0 * static_cast<double>(k);
    svg.rect(left + plot_w + 16, ly, 12, 12, kPalette[k % std::size(kPalette)]);
    svg.text(left + plot_w + 34, ly + 10, order[k]);
  }
  return svg.str();
}

struct SeriesPoint {
  std::size_t turns;
  double node_delta;
  double ged;
  std::optional<double> semantic;
};

std::string sensitivity_svg(const std::map<std::string, std::vector<SeriesPoint>>& series) {
  const int panel_w = 300;
  const int panel_h = 200;
  const int top = 50;
  const int gap = 60;
  Svg svg(40 + 3 * (panel_w + gap) + 140, top + panel_h + 60);
  svg.text(10, 22, "Plan divergence vs conversation length (turns)", "start", 14);
  std::size_t max_turns = 1;
  for (const auto& [k, pts] : series) {
    for (const auto& p : pts) max_turns = std::max(max_turns, p.turns);
  }
  const char* titles[] = {"node count delta", "graph edit distance", "semantic distance"};
  for (int panel = 0; panel < 3; ++panel) {
    const double x0 = 50 + panel * (panel_w + gap);
    double ymax = 1.0;
    for (const auto& [k, pts] : series) {
      for (const auto& p : pts) {
        if (panel == 0) ymax = std::max(ymax, p.node_delta);
        if (panel == 1) ymax = std::max(ymax, p.ged);
        if (panel == 2 && p.semantic) ymax = std::max(ymax, *p.semantic);
      }
    }
    svg.text(x0 + panel_w / 2.0, top - 8, titles[panel], "middle");
    svg.line(x0, top + panel_h, x0 + panel_w, top + panel_h, "#333");
    svg.line(x0, top, x0, top + panel_h, "#333");
    svg.text(x0 - 4, top + 4, fmt::format("{:.2f}", ymax), "end", 10);
    svg.text(x0 - 4, top + panel_h, "0", "end", 10);
    svg.text(x0 + panel_w, top + panel_h + 16, std::to_string(max_turns), "end", 10);
    svg.text(x0, top + panel_h + 16, "0", "middle", 10);
    std::size_t k = 0;
    for (const auto& [key, pts] : series) {
      std::vector<std::pair<double, double>> xy;
      for (const auto& p : pts) {
        double v = panel == 0 ? p.node_delta : panel == 1 ? p.ged : p.semantic.value_or(-1.0);
        if (v < 0) continue;
        xy.emplace_back(x0 + panel_w * static_cast<double>(p.turns) / static_cast<double>(max_turns),
                        top + panel_h - panel_h * v / ymax);
      }
      svg.polyline(xy, kPalette[k % std::size(kPalette)]);
      ++k;
    }
  }
  std::size_t k = 0;
  for (const auto& [key, pts] : series) {
    const double ly = top + 20.0 * static_cast<double>(k);
    const double lx = 50 + 3 * (panel_w + gap) - 20;
    svg.rect(lx, ly, 12, 12, kPalette[k % std::size(kPalette)]);
    svg.text(lx + 18, ly + 10, key);
    ++k;
  }
  return svg.str();
}

struct Mean {
  double sum = 0.0;
  std::size_t n = 0;
  void add(double v) {
    sum += v;
    ++n;
  }
  double value() const { return n ? sum / static_cast<double>(n) : 0.0; }
};

struct PairAgg {
  Mean node_delta, edge_delta, ged, semantic;
};

}  // namespace

std::string wtl_csv(const WtlTable& table) {
  std::string out = "group,rewriter,wins,ties,losses,comparisons,win_pct,tie_pct,loss_pct\n";
  for (const auto& r : table.rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{}\n", r.group, r.rewriter, r.wins, r.ties,
                       r.losses, r.comparisons, num(r.win_pct), num(r.tie_pct), num(r.loss_pct));
  }
  return out;
}

std::map<std::string, std::vector<std::size_t>> rank_histogram(const std::vector<RankTable>& ranks,
                                                               std::size_t rewriter_count) {
  std::map<std::string, std::vector<std::size_t>> hist;
  for (const auto& t : ranks) {
    for (const auto& [id, e] : t.entries) {
      auto& counts = hist[id];
      counts.resize(rewriter_count, 0);
      if (e.rank < 1 || static_cast<std::size_t>(e.rank) > rewriter_count) {
        throw Error(ErrorCode::kInvalidArgument, "rank out of range for " + t.conversation_id);
      }
      ++counts[static_cast<std::size_t>(e.rank - 1)];
    }
  }
  return hist;
}

std::vector<std::string> write_report(const ReportInputs& in, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  std::vector<std::string> files;
  auto emit = [&](const std::string& name, const std::string& content) {
    write_file(out_dir / name, content);
    files.push_back(name);
  };

  json summary = {{"preferences", in.preferences.size()},
                  {"conversations", in.conversations.size()},
                  {"ranked_conversations", in.ranks.size()}};

  WtlTable total;
  for (auto g : {GroupBy::kTotal, GroupBy::kChallenge, GroupBy::kTopic, GroupBy::kLength}) {
    const auto table = aggregate_wtl(in.preferences, g, in.conversations);
    emit("wtl_" + std::string(to_string(g)) + ".csv", wtl_csv(table));
    if (g == GroupBy::kTotal) total = table;
  }
  json wtl = json::array();
  for (const auto& r : total.rows) {
    wtl.push_back({{"rewriter", r.rewriter}, {"wins", r.wins}, {"ties", r.ties},
                   {"losses", r.losses}, {"comparisons", r.comparisons}});
  }
  summary["wtl_total"] = std::move(wtl);
  emit("wtl.svg", wtl_svg(total));

  std::vector<std::string> order = in.rewriters;
  std::size_t ranks = order.size();
  for (const auto& t : in.ranks) ranks = std::max(ranks, t.entries.size());
  const auto hist = rank_histogram(in.ranks, ranks);
  for (const auto& [id, counts] : hist) {
    if (std::find(order.begin(), order.end(), id) == order.end()) order.push_back(id);
  }
  std::string rank_csv = "rewriter";
  for (std::size_t r = 1; r <= ranks; ++r) rank_csv += ",rank_" + std::to_string(r);
  rank_csv += ",conversations\n";
  for (const auto& id : order) {
    auto it = hist.find(id);
    if (it == hist.end()) continue;
    std::size_t n = 0;
    rank_csv += id;
    for (auto c : it->second) {
      rank_csv += "," + std::to_string(c);
      n += c;
    }
    rank_csv += "," + std::to_string(n) + "\n";
  }
  emit("rank_histogram.csv", rank_csv);
  emit("rank_histogram.svg", rank_svg(hist, order, ranks));

  std::map<std::string, PairAgg> pairs;
  std::map<std::string, std::map<std::size_t, PairAgg>> by_len;
  for (const auto& m : in.metrics) {
    const auto key = m.at("rewriter_a").get<std::string>() + " vs " + m.at("rewriter_b").get<std::string>();
    const auto turns = m.at("turns").get<std::size_t>();
    for (auto* agg : {&pairs[key], &by_len[key][turns]}) {
      agg->node_delta.add(m.at("node_delta").get<double>());
      agg->edge_delta.add(m.at("edge_delta").get<double>());
      agg->ged.add(m.at("ged").get<double>());
      if (!m.at("semantic_distance").is_null()) agg->semantic.add(m["semantic_distance"].get<double>());
    }
  }
  std::string pm = "pair,n,mean_node_delta,mean_edge_delta,mean_ged,mean_semantic_distance,semantic_n\n";
  json pair_summary = json::object();
  for (const auto& [key, a] : pairs) {
    pm += fmt::format("{},{},{},{},{},{},{}\n", key, a.ged.n, num(a.node_delta.value()),
                      num(a.edge_delta.value()), num(a.ged.value()), num(a.semantic.value()),
                      a.semantic.n);
    pair_summary[key] = {{"n", a.ged.n}, {"mean_ged", a.ged.value()},
                         {"mean_semantic_distance", a.semantic.value()}};
  }
  summary["pairs"] = std::move(pair_summary);
  emit("pair_means.csv", pm);

  std::string sens = "pair,turns,n,mean_node_delta,mean_edge_delta,mean_ged,mean_semantic_distance\n";
  std::map<std::string, std::vector<SeriesPoint>> series;
  for (const auto& [key, per_len] : by_len) {
    for (const auto& [turns, a] : per_len) {
      sens += fmt::format("{},{},{},{},{},{},{}\n", key, turns, a.ged.n, num(a.node_delta.value()),
                          num(a.edge_delta.value()), num(a.ged.value()),
                          a.semantic.n ? num(a.semantic.value()) : std::string());
      series[key].push_back({turns, a.node_delta.value(), a.ged.value(),
                             a.semantic.n ? std::optional(a.semantic.value()) : std::nullopt});
    }
  }
  emit("sensitivity.csv", sens);
  emit("sensitivity.svg", sensitivity_svg(series));

  emit("summary.json", summary.dump(2) + "\n");
  return files;
}

}  // namespace convplan
