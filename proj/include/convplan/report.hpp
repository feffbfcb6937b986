#pragma once

// Report rendering: win/tie/loss tables, rank histograms and length
// sensitivity, as CSV plus standalone SVG charts.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "convplan/core.hpp"
#include "convplan/preference.hpp"

namespace convplan {

struct ReportInputs {
  std::vector<PreferenceRecord> preferences;
  std::vector<RankTable> ranks;
  /// Rows of metrics.jsonl.
  std::vector<json> metrics;
  std::map<std::string, Conversation> conversations;
  /// Display order of rewriters.
  std::vector<std::string> rewriters;
};

/// Writes every report artifact into `out_dir`; returns file names relative to it.
std::vector<std::string> write_report(const ReportInputs& inputs,
                                      const std::filesystem::path& out_dir);

std::string wtl_csv(const WtlTable& table);

/// rewriter -> counts indexed by rank - 1.
std::map<std::string, std::vector<std::size_t>> rank_histogram(const std::vector<RankTable>& ranks,
                                                               std::size_t rewriter_count);

}  // namespace convplan
