#include "convplan/core.hpp"

#include <algorithm>
#include <cmath>

#include "convplan/error.hpp"

namespace convplan {

namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view s, const std::array<std::pair<Enum, std::string_view>, N>& table,
                std::string_view what) {
  for (const auto& [value, name] : table) {
    if (name == s) return value;
  }
  throw Error(ErrorCode::kSchemaError, "unknown " + std::string(what) + " '" + std::string(s) + "'");
}

constexpr std::array<std::pair<Speaker, std::string_view>, 2> kSpeakerNames{{
    {Speaker::kUser, "USER"},
    {Speaker::kAgent, "AGENT"},
}};
constexpr std::array<std::pair<Topic, std::string_view>, 5> kTopicNames{{
    {Topic::kCooking, "cooking"},
    {Topic::kProgramming, "programming"},
    {Topic::kHealth, "health"},
    {Topic::kFlights, "flights"},
    {Topic::kRestaurants, "restaurants"},
}};
constexpr std::array<std::pair<Challenge, std::string_view>, 5> kChallengeNames{{
    {Challenge::kShiftedIntent, "shifted_intent"},
    {Challenge::kNoisyInput, "noisy_input"},
    {Challenge::kUnderspecifiedIntent, "underspecified_intent"},
    {Challenge::kMultiIntent, "multi_intent"},
    {Challenge::kPerfectIntent, "perfect_intent"},
}};
constexpr std::array<std::pair<LengthClass, std::string_view>, 3> kLengthNames{{
    {LengthClass::kShort, "short"},
    {LengthClass::kMedium, "medium"},
    {LengthClass::kLong, "long"},
}};
constexpr std::array<std::pair<Provenance, std::string_view>, 3> kProvenanceNames{{
    {Provenance::kGenerated, "generated"},
    {Provenance::kIn3Converted, "in3_converted"},
    {Provenance::kIngested, "ingested"},
}};
constexpr std::array<std::pair<Split, std::string_view>, 3> kSplitNames{{
    {Split::kTrain, "train"},
    {Split::kVal, "val"},
    {Split::kTest, "test"},
}};

template <typename Enum, std::size_t N>
std::string_view name_of(Enum v, const std::array<std::pair<Enum, std::string_view>, N>& table) {
  for (const auto& [value, name] : table) {
    if (value == v) return name;
  }
  return "?";
}

bool has_speaker_prefix(std::string_view text) {
  const auto t = trim(text);
  return starts_with(t, "USER:") || starts_with(t, "AGENT:");
}

}  // namespace

std::string_view to_string(Speaker v) { return name_of(v, kSpeakerNames); }
std::string_view to_string(Topic v) { return name_of(v, kTopicNames); }
std::string_view to_string(Challenge v) { return name_of(v, kChallengeNames); }
std::string_view to_string(LengthClass v) { return name_of(v, kLengthNames); }
std::string_view to_string(Provenance v) { return name_of(v, kProvenanceNames); }
std::string_view to_string(Split v) { return name_of(v, kSplitNames); }

Speaker parse_speaker(std::string_view s) { return parse_enum(s, kSpeakerNames, "speaker"); }
Topic parse_topic(std::string_view s) { return parse_enum(s, kTopicNames, "topic"); }
Challenge parse_challenge(std::string_view s) { return parse_enum(s, kChallengeNames, "challenge"); }
LengthClass parse_length_class(std::string_view s) {
  return parse_enum(s, kLengthNames, "length class");
}
Provenance parse_provenance(std::string_view s) {
  return parse_enum(s, kProvenanceNames, "provenance");
}
Split parse_split(std::string_view s) { return parse_enum(s, kSplitNames, "split"); }

std::optional<Challenge> try_parse_challenge(std::string_view s) {
  for (const auto& [value, name] : kChallengeNames) {
    if (name == s) return value;
  }
  return std::nullopt;
}

LengthClass classify_length(std::size_t turn_count) {
  if (turn_count == 0) throw Error(ErrorCode::kEmptyInput, "conversation has no turns");
  if (turn_count <= 5) return LengthClass::kShort;
  if (turn_count <= 10) return LengthClass::kMedium;
  if (turn_count <= kMaxTurns) return LengthClass::kLong;
  throw Error(ErrorCode::kLengthOutOfRange,
              std::to_string(turn_count) + " turns exceeds the " + std::to_string(kMaxTurns) +
                  "-turn maximum");
}

LengthClass classify_length(const Conversation& conversation) {
  return classify_length(conversation.turns.size());
}

std::string_view to_string(Violation v) {
  switch (v) {
    case Violation::kEmptyConversation: return "empty_conversation";
    case Violation::kEmptyTurn: return "empty_turn";
    case Violation::kEmbeddedPrefix: return "embedded_prefix";
    case Violation::kStartsWithAgent: return "starts_with_agent";
    case Violation::kEndsWithAgent: return "ends_with_agent";
    case Violation::kNonAlternating: return "non_alternating";
    case Violation::kLengthMismatch: return "length_mismatch";
    case Violation::kTooLong: return "too_long";
  }
  return "?";
}

bool ValidationReport::contains(Violation v) const {
  return std::find(violations.begin(), violations.end(), v) != violations.end();
}

ValidationReport validate_conversation(const Conversation& c) {
  ValidationReport report;
  auto& out = report.violations;
  if (c.turns.empty()) {
    out.push_back(Violation::kEmptyConversation);
    return report;
  }
  bool empty_turn = false;
  bool prefixed = false;
  bool alternating = true;
  for (std::size_t i = 0; i < c.turns.size(); ++i) {
    const auto& t = c.turns[i];
    if (trim(t.text).empty()) empty_turn = true;
    if (has_speaker_prefix(t.text)) prefixed = true;
    if (i > 0 && t.speaker == c.turns[i - 1].speaker) alternating = false;
  }
  if (empty_turn) out.push_back(Violation::kEmptyTurn);
  if (prefixed) out.push_back(Violation::kEmbeddedPrefix);
  if (c.turns.front().speaker != Speaker::kUser) out.push_back(Violation::kStartsWithAgent);
  if (c.turns.back().speaker != Speaker::kUser) out.push_back(Violation::kEndsWithAgent);
  if (!alternating) out.push_back(Violation::kNonAlternating);
  if (c.turns.size() > kMaxTurns) {
    out.push_back(Violation::kTooLong);
  } else if (classify_length(c) != c.length_class) {
    out.push_back(Violation::kLengthMismatch);
  }
  return report;
}

std::string compute_conversation_id(const Conversation& c) {
  json turns = json::array();
  for (const auto& t : c.turns) {
    turns.push_back({{"speaker", to_string(t.speaker)}, {"text", normalize_label(t.text)}});
  }
  const json key = {{"topic", to_string(c.topic)},
                    {"challenge", to_string(c.challenge)},
                    {"provenance", to_string(c.provenance)},
                    {"turns", std::move(turns)}};
  return "conv-" + sha256_hex(key.dump()).substr(0, 16);
}

Conversation with_content_id(Conversation conversation) {
  conversation.id = compute_conversation_id(conversation);
  return conversation;
}

std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios& r) {
  const std::array<double, 3> ratios = {r.train, r.val, r.test};
  double sum = 0.0;
  for (double x : ratios) {
    if (!(x >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "split ratios must be non-negative");
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "split ratios must sum to 1");
  }
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainders{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    // Guard against products like 150 * 0.3 = 44.999999999999993.
    const double exact = static_cast<double>(n) * ratios[i];
    const double floored = std::floor(exact + 1e-9);
    counts[i] = static_cast<std::size_t>(floored);
    remainders[i] = std::max(0.0, exact - floored);
    assigned += counts[i];
  }
  std::array<std::size_t, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b] + 1e-12; });
  for (std::size_t k = 0; assigned < n; k = (k + 1) % 3) {
    if (ratios[order[k]] > 0.0) {
      ++counts[order[k]];
      ++assigned;
    }
  }
  return counts;
}

SplitAssignment split_dataset(const std::vector<std::string>& ids, const SplitRatios& ratios,
                              std::uint64_t seed, const std::map<std::string, std::string>* strata) {
  if (ids.empty()) throw Error(ErrorCode::kEmptyInput, "no ids to split");
  std::vector<std::string> unique = ids;
  std::sort(unique.begin(), unique.end());
  if (std::adjacent_find(unique.begin(), unique.end()) != unique.end()) {
    throw Error(ErrorCode::kInvalidArgument, "duplicate ids in split input");
  }

  std::map<std::string, std::vector<std::string>> groups;
  for (const auto& id : unique) {
    std::string key;
    if (strata != nullptr) {
      auto it = strata->find(id);
      if (it == strata->end()) {
        throw Error(ErrorCode::kInvalidArgument, "id '" + id + "' has no stratum");
      }
      key = it->second;
    }
    groups[key].push_back(id);
  }

  SplitAssignment out;
  for (auto& [key, members] : groups) {
    Rng rng(splitmix64(seed ^ seed_from_string(key)));
    rng.shuffle(members);
    const auto counts = split_counts(members.size(), ratios);
    std::size_t i = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t k = 0; k < counts[s]; ++k) out[members[i++]] = static_cast<Split>(s);
    }
  }
  return out;
}

json to_json(const Turn& turn) {
  return {{"speaker", to_string(turn.speaker)}, {"text", turn.text}};
}

json to_json(const Conversation& c) {
  json turns = json::array();
  for (const auto& t : c.turns) turns.push_back(to_json(t));
  return {{"id", c.id},
          {"topic", to_string(c.topic)},
          {"challenge", to_string(c.challenge)},
          {"length_class", to_string(c.length_class)},
          {"provenance", to_string(c.provenance)},
          {"turns", std::move(turns)}};
}

json to_json(const Rewrite& r) {
  json j = {{"conversation_id", r.conversation_id},
            {"rewriter_id", r.rewriter_id},
            {"text", r.text}};
  j["model_id"] = r.model_id ? json(*r.model_id) : json(nullptr);
  return j;
}

Conversation conversation_from_json(const json& j) {
  try {
    Conversation c;
    c.id = j.at("id").get<std::string>();
    c.topic = parse_topic(j.at("topic").get<std::string>());
    c.challenge = parse_challenge(j.at("challenge").get<std::string>());
    c.length_class = parse_length_class(j.at("length_class").get<std::string>());
    c.provenance = parse_provenance(j.value("provenance", std::string("ingested")));
    for (const auto& t : j.at("turns")) {
      c.turns.push_back({parse_speaker(t.at("speaker").get<std::string>()),
                         t.at("text").get<std::string>()});
    }
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaError, std::string("conversation: ") + e.what());
  }
}

Rewrite rewrite_from_json(const json& j) {
  try {
    Rewrite r;
    r.conversation_id = j.at("conversation_id").get<std::string>();
    r.rewriter_id = j.at("rewriter_id").get<std::string>();
    r.text = j.at("text").get<std::string>();
    if (j.contains("model_id") && !j["model_id"].is_null()) {
      r.model_id = j["model_id"].get<std::string>();
    }
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaError, std::string("rewrite: ") + e.what());
  }
}

std::vector<Conversation> read_conversations(const std::filesystem::path& path) {
  std::vector<Conversation> out;
  for (const auto& row : read_jsonl(path)) out.push_back(conversation_from_json(row));
  return out;
}

void write_conversations(const std::filesystem::path& path,
                         const std::vector<Conversation>& conversations) {
  std::vector<json> rows;
  rows.reserve(conversations.size());
  for (const auto& c : conversations) rows.push_back(to_json(c));
  write_jsonl(path, rows);
}

}  // namespace convplan
