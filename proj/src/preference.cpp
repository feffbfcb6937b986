#include "convplan/preference.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "convplan/error.hpp"
#include "convplan/prompts.hpp"
#include "convplan/rewriters.hpp"

namespace convplan {

const Rubric& Rubric::standard() {
  static const Rubric rubric{{
      {"latest_intent", "Latest Intent",
       "The plan should reflect the user's most recent goals or intent as expressed in the "
       "conversation."},
      {"fabrication", "Fabrication",
       "The plan should avoid unnecessary, repetitive, or fabricated steps."},
      {"task_granularity", "Task Granularity",
       "The plan should offer specific and detailed actions."},
      {"task_completeness", "Task Completeness",
       "The plan should include all necessary steps to fully accomplish the user's goal."},
      {"logical_order", "Logical Order",
       "Tasks should be arranged in a coherent, logical sequence. Parallelizable tasks should be "
       "grouped accordingly for efficiency."},
  }};
  return rubric;
}

std::string Rubric::render() const {
  std::string out;
  for (const auto& c : criteria) {
    out += "\n- ";
    out += c.title;
    out += ": ";
    out += c.description;
  }
  return out;
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::kA: return "A";
    case Verdict::kB: return "B";
    case Verdict::kTie: return "TIE";
  }
  return "TIE";
}

Verdict parse_verdict_name(std::string_view s) {
  if (s == "A") return Verdict::kA;
  if (s == "B") return Verdict::kB;
  if (s == "TIE") return Verdict::kTie;
  throw Error(ErrorCode::kSchemaError, "unknown verdict '" + std::string(s) + "'");
}

std::optional<Verdict> parse_verdict(std::string_view reply) {
  std::string token;
  auto check = [&]() -> std::optional<Verdict> {
    const auto t = to_lower(token);
    token.clear();
    if (t == "a") return Verdict::kA;
    if (t == "b") return Verdict::kB;
    if (t == "tie") return Verdict::kTie;
    return std::nullopt;
  };
  for (char ch : reply) {
    if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_') {
      token.push_back(ch);
    } else if (!token.empty()) {
      if (auto v = check()) return v;
    }
  }
  if (!token.empty()) return check();
  return std::nullopt;
}

std::string Presentation::key() const {
  return conversation_id + "|" + slot_a + "|" + slot_b + "|" + std::to_string(shuffle_seed);
}

Presentation make_presentation(const std::string& conversation_id, const std::string& rewriter_x,
                               const std::string& rewriter_y, std::uint64_t seed) {
  if (rewriter_x == rewriter_y) {
    throw Error(ErrorCode::kSameRewriter, "cannot compare rewriter '" + rewriter_x + "' to itself");
  }
  const auto& lo = std::min(rewriter_x, rewriter_y);
  const auto& hi = std::max(rewriter_x, rewriter_y);
  const bool swap = (splitmix64(seed) >> 63) != 0;
  return Presentation{conversation_id, swap ? hi : lo, swap ? lo : hi, seed};
}

std::uint64_t presentation_seed(std::uint64_t run_seed, const std::string& conversation_id,
                                const std::string& rewriter_x, const std::string& rewriter_y) {
  const auto& lo = std::min(rewriter_x, rewriter_y);
  const auto& hi = std::max(rewriter_x, rewriter_y);
  return splitmix64(run_seed ^ seed_from_string(conversation_id + "\x1f" + lo + "\x1f" + hi));
}

std::optional<std::string> PreferenceRecord::loser() const {
  if (!winner) return std::nullopt;
  return *winner == presentation.slot_a ? presentation.slot_b : presentation.slot_a;
}

std::optional<std::string> derandomize(const Presentation& p, Verdict v) {
  switch (v) {
    case Verdict::kA: return p.slot_a;
    case Verdict::kB: return p.slot_b;
    case Verdict::kTie: return std::nullopt;
  }
  return std::nullopt;
}

PreferenceRecord make_record(const Presentation& p, Verdict v, std::string judge) {
  return PreferenceRecord{p, v, std::move(judge), derandomize(p, v)};
}

json to_json(const PreferenceRecord& r) {
  json j = {{"conversation_id", r.presentation.conversation_id},
            {"slot_a", r.presentation.slot_a},
            {"slot_b", r.presentation.slot_b},
            {"shuffle_seed", r.presentation.shuffle_seed},
            {"verdict", to_string(r.verdict)},
            {"judge", r.judge}};
  j["winner"] = r.winner ? json(*r.winner) : json("TIE");
  return j;
}

PreferenceRecord preference_record_from_json(const json& j) {
  try {
    Presentation p{j.at("conversation_id").get<std::string>(), j.at("slot_a").get<std::string>(),
                   j.at("slot_b").get<std::string>(), j.at("shuffle_seed").get<std::uint64_t>()};
    auto record = make_record(p, parse_verdict_name(j.at("verdict").get<std::string>()),
                              j.value("judge", std::string()));
    if (j.contains("winner")) {
      const auto w = j["winner"].get<std::string>();
      const auto expected = record.winner.value_or("TIE");
      if (w != expected) {
        throw Error(ErrorCode::kSchemaError,
                    "record winner '" + w + "' inconsistent with verdict and slots");
      }
    }
    return record;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaError, std::string("preference record: ") + e.what());
  }
}

std::string render_judge_prompt(const Conversation& conversation, const Plan& plan_a,
                                const Plan& plan_b, const Rubric& rubric) {
  return prompts::render(prompts::kJudgeTemplate, {{"RUBRICS", rubric.render()},
                                                   {"conversation", serialize_dialogue(conversation)},
                                                   {"planA", serialize_plan(plan_a)},
                                                   {"planB", serialize_plan(plan_b)}});
}

PreferenceRecord judge_llm(const Presentation& presentation,
                           const std::map<std::string, Plan>& plans,
                           const Conversation& conversation, const Rubric& rubric,
                           const Gateway& gateway, const std::string& model_id) {
  auto a = plans.find(presentation.slot_a);
  auto b = plans.find(presentation.slot_b);
  if (a == plans.end() || b == plans.end()) {
    throw Error(ErrorCode::kDanglingReference,
                "missing plan for " + (a == plans.end() ? presentation.slot_a : presentation.slot_b) +
                    " on " + presentation.conversation_id);
  }
  const auto prompt = render_judge_prompt(conversation, a->second, b->second, rubric);
  const auto reply = gateway.complete(ChatRequest::single(model_id, prompt, 0.0));
  const auto verdict = parse_verdict(reply.text);
  if (!verdict) {
    throw Error(ErrorCode::kUnparseableVerdict,
                "no A/B/TIE token in judge reply: '" + reply.text.substr(0, 80) + "'");
  }
  return make_record(presentation, *verdict, "model:" + model_id);
}

Verdict majority_vote(const std::vector<PreferenceRecord>& labels) {
  if (labels.empty()) throw Error(ErrorCode::kInvalidArgument, "majority vote over no labels");
  const auto& first = labels.front().presentation;
  std::map<Verdict, std::size_t> counts;
  for (const auto& l : labels) {
    if (!(l.presentation == first)) {
      throw Error(ErrorCode::kMixedPresentation, "labels span more than one presentation");
    }
    ++counts[l.verdict];
  }
  for (const auto& [v, n] : counts) {
    if (2 * n > labels.size()) return v;
  }
  return Verdict::kTie;
}

std::string_view to_string(GroupBy g) {
  switch (g) {
    case GroupBy::kChallenge: return "challenge";
    case GroupBy::kTopic: return "topic";
    case GroupBy::kLength: return "length";
    case GroupBy::kTotal: return "total";
  }
  return "total";
}

GroupBy parse_group_by(std::string_view s) {
  if (s == "challenge") return GroupBy::kChallenge;
  if (s == "topic") return GroupBy::kTopic;
  if (s == "length") return GroupBy::kLength;
  if (s == "total") return GroupBy::kTotal;
  throw Error(ErrorCode::kInvalidArgument, "unknown grouping '" + std::string(s) + "'");
}

const WtlRow* WtlTable::find(const std::string& group, const std::string& rewriter) const {
  for (const auto& r : rows) {
    if (r.group == group && r.rewriter == rewriter) return &r;
  }
  return nullptr;
}

WtlTable aggregate_wtl(const std::vector<PreferenceRecord>& records, GroupBy group_by,
                       const std::map<std::string, Conversation>& conversations) {
  auto group_of = [&](const std::string& conversation_id) -> std::string {
    if (group_by == GroupBy::kTotal) return "total";
    auto it = conversations.find(conversation_id);
    if (it == conversations.end()) {
      throw Error(ErrorCode::kDanglingReference, "no conversation metadata for " + conversation_id);
    }
    switch (group_by) {
      case GroupBy::kChallenge: return std::string(to_string(it->second.challenge));
      case GroupBy::kTopic: return std::string(to_string(it->second.topic));
      case GroupBy::kLength: return std::string(to_string(it->second.length_class));
      case GroupBy::kTotal: break;
    }
    return "total";
  };

  std::map<std::pair<std::string, std::string>, WtlRow> rows;
  auto row = [&](const std::string& group, const std::string& rewriter) -> WtlRow& {
    auto& r = rows[{group, rewriter}];
    r.group = group;
    r.rewriter = rewriter;
    return r;
  };
  for (const auto& rec : records) {
    const auto group = group_of(rec.presentation.conversation_id);
    auto& a = row(group, rec.presentation.slot_a);
    auto& b = row(group, rec.presentation.slot_b);
    ++a.comparisons;
    ++b.comparisons;
    if (rec.is_tie()) {
      ++a.ties;
      ++b.ties;
    } else if (*rec.winner == rec.presentation.slot_a) {
      ++a.wins;
      ++b.losses;
    } else {
      ++b.wins;
      ++a.losses;
    }
  }
  WtlTable table;
  table.group_by = group_by;
  for (auto& [key, r] : rows) {
    const double n = static_cast<double>(r.comparisons);
    r.win_pct = 100.0 * static_cast<double>(r.wins) / n;
    r.tie_pct = 100.0 * static_cast<double>(r.ties) / n;
    r.loss_pct = 100.0 * static_cast<double>(r.losses) / n;
    table.rows.push_back(r);
  }
  return table;
}

std::map<std::string, int> competition_ranks(const std::map<std::string, double>& scores) {
  std::map<std::string, int> ranks;
  for (const auto& [id, s] : scores) {
    int higher = 0;
    for (const auto& [other, t] : scores) {
      if (t > s + 1e-9) ++higher;
    }
    ranks[id] = 1 + higher;
  }
  return ranks;
}

RankTable rank_rewriters(const std::vector<PreferenceRecord>& records) {
  if (records.empty()) throw Error(ErrorCode::kIncompletePairSet, "no records to rank");
  RankTable table;
  table.conversation_id = records.front().presentation.conversation_id;
  std::map<std::string, double> scores;
  std::set<std::pair<std::string, std::string>> pairs;
  for (const auto& r : records) {
    const auto& p = r.presentation;
    if (p.conversation_id != table.conversation_id) {
      throw Error(ErrorCode::kMixedPresentation, "ranking records span several conversations");
    }
    if (!pairs.insert(std::minmax(p.slot_a, p.slot_b)).second) {
      throw Error(ErrorCode::kInvalidArgument,
                  "pair (" + p.slot_a + ", " + p.slot_b + ") appears twice for " +
                      table.conversation_id);
    }
    scores.try_emplace(p.slot_a, 0.0);
    scores.try_emplace(p.slot_b, 0.0);
    if (r.is_tie()) {
      scores[p.slot_a] += 0.5;
      scores[p.slot_b] += 0.5;
    } else {
      scores[*r.winner] += 1.0;
    }
  }
  const std::size_t n = scores.size();
  if (n < 2 || pairs.size() != n * (n - 1) / 2) {
    throw Error(ErrorCode::kIncompletePairSet,
                table.conversation_id + ": " + std::to_string(pairs.size()) + " of " +
                    std::to_string(n * (n - 1) / 2) + " rewriter pairs present");
  }
  const auto ranks = competition_ranks(scores);
  for (const auto& [id, s] : scores) table.entries[id] = RankEntry{s, ranks.at(id)};
  return table;
}

json to_json(const RankTable& table) {
  json entries = json::object();
  for (const auto& [id, e] : table.entries) entries[id] = {{"score", e.score}, {"rank", e.rank}};
  return {{"conversation_id", table.conversation_id}, {"rewriters", std::move(entries)}};
}

double inter_annotator_accuracy(
    const std::map<std::string, std::map<std::string, Verdict>>& labels) {
  if (labels.size() < 2) throw Error(ErrorCode::kNoOverlap, "need at least two annotators");
  double total = 0.0;
  std::size_t pairs = 0;
  for (auto i = labels.begin(); i != labels.end(); ++i) {
    for (auto j = std::next(i); j != labels.end(); ++j) {
      std::size_t shared = 0;
      std::size_t agree = 0;
      for (const auto& [item, v] : i->second) {
        auto it = j->second.find(item);
        if (it == j->second.end()) continue;
        ++shared;
        if (it->second == v) ++agree;
      }
      if (shared == 0) continue;
      total += static_cast<double>(agree) / static_cast<double>(shared);
      ++pairs;
    }
  }
  if (pairs == 0) throw Error(ErrorCode::kNoOverlap, "no annotator pair shares an item");
  return total / static_cast<double>(pairs);
}

}  // namespace convplan
