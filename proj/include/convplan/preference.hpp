#pragma once

// Pairwise plan preference: blind randomized presentation, rubric-based model
// judging, vote aggregation, win/tie/loss tables, per-conversation ranking and
// annotator agreement.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "convplan/core.hpp"
#include "convplan/gateway.hpp"
#include "convplan/plan.hpp"

namespace convplan {

struct RubricCriterion {
  std::string key;
  std::string title;
  std::string description;
};

/// The five criteria in their fixed order.
struct Rubric {
  std::vector<RubricCriterion> criteria;

  static const Rubric& standard();
  /// "- Title: description" lines.
  std::string render() const;
};

enum class Verdict { kA, kB, kTie };

std::string_view to_string(Verdict v);
Verdict parse_verdict_name(std::string_view s);

/// First standalone A / B / TIE token, case-insensitive.
std::optional<Verdict> parse_verdict(std::string_view reply);

struct Presentation {
  std::string conversation_id;
  std::string slot_a;
  std::string slot_b;
  std::uint64_t shuffle_seed = 0;

  bool operator==(const Presentation&) const = default;
  /// Identity of the presentation, stable across processes.
  std::string key() const;
};

/// Seeded fair coin over the unordered pair. Throws SameRewriter.
Presentation make_presentation(const std::string& conversation_id, const std::string& rewriter_x,
                               const std::string& rewriter_y, std::uint64_t seed);

/// Deterministic per-(conversation, pair) seed derived from a run-level seed.
std::uint64_t presentation_seed(std::uint64_t run_seed, const std::string& conversation_id,
                                const std::string& rewriter_x, const std::string& rewriter_y);

struct PreferenceRecord {
  Presentation presentation;
  Verdict verdict = Verdict::kTie;
  /// "human:<annotator>" or "model:<model id>".
  std::string judge;
  /// Rewriter whose plan won; nullopt for TIE.
  std::optional<std::string> winner;

  bool is_tie() const { return !winner.has_value(); }
  std::optional<std::string> loser() const;
};

std::optional<std::string> derandomize(const Presentation& p, Verdict v);
PreferenceRecord make_record(const Presentation& p, Verdict v, std::string judge);

json to_json(const PreferenceRecord& record);
PreferenceRecord preference_record_from_json(const json& j);

std::string render_judge_prompt(const Conversation& conversation, const Plan& plan_a,
                                const Plan& plan_b, const Rubric& rubric = Rubric::standard());

/// `plans` maps rewriter id to that rewriter's plan for this conversation.
/// Throws UnparseableVerdict when the reply carries no verdict token.
PreferenceRecord judge_llm(const Presentation& presentation,
                           const std::map<std::string, Plan>& plans,
                           const Conversation& conversation, const Rubric& rubric,
                           const Gateway& gateway, const std::string& model_id);

/// Strict majority of the verdicts, TIE when none. Throws MixedPresentation.
Verdict majority_vote(const std::vector<PreferenceRecord>& labels);

enum class GroupBy { kChallenge, kTopic, kLength, kTotal };

std::string_view to_string(GroupBy g);
GroupBy parse_group_by(std::string_view s);

struct WtlRow {
  std::string group;
  std::string rewriter;
  std::size_t wins = 0;
  std::size_t ties = 0;
  std::size_t losses = 0;
  std::size_t comparisons = 0;
  double win_pct = 0.0;
  double tie_pct = 0.0;
  double loss_pct = 0.0;
};

/// Rows sorted by (group, rewriter). Percentages are per rewriter appearance:
/// each record counts once for each of its two rewriters.
struct WtlTable {
  GroupBy group_by = GroupBy::kTotal;
  std::vector<WtlRow> rows;

  const WtlRow* find(const std::string& group, const std::string& rewriter) const;
};

WtlTable aggregate_wtl(const std::vector<PreferenceRecord>& records, GroupBy group_by,
                       const std::map<std::string, Conversation>& conversations = {});

struct RankEntry {
  double score = 0.0;
  int rank = 0;
};

struct RankTable {
  std::string conversation_id;
  std::map<std::string, RankEntry> entries;
};

/// +1 win, +0.5 each on TIE; standard competition ranks. All records must share
/// one conversation and cover every rewriter pair exactly once.
RankTable rank_rewriters(const std::vector<PreferenceRecord>& records);

/// Competition ranks for arbitrary scores (equal scores share the best rank).
std::map<std::string, int> competition_ranks(const std::map<std::string, double>& scores);

json to_json(const RankTable& table);

/// annotator -> (item key -> verdict). Mean over annotator pairs with shared
/// items of the fraction of identical verdicts. Throws NoOverlap.
double inter_annotator_accuracy(
    const std::map<std::string, std::map<std::string, Verdict>>& labels);

}  // namespace convplan
