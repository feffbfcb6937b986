#pragma once

// Domain types shared by every stage of the harness: conversations, rewrites,
// split assignment, plus their JSONL encodings.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "convplan/util.hpp"

namespace convplan {

enum class Speaker { kUser, kAgent };
enum class Topic { kCooking, kProgramming, kHealth, kFlights, kRestaurants };
enum class Challenge {
  kShiftedIntent,
  kNoisyInput,
  kUnderspecifiedIntent,
  kMultiIntent,
  kPerfectIntent,
};
enum class LengthClass { kShort, kMedium, kLong };
enum class Provenance { kGenerated, kIn3Converted, kIngested };
enum class Split { kTrain, kVal, kTest };

inline constexpr std::array kAllTopics = {Topic::kCooking, Topic::kProgramming, Topic::kHealth,
                                          Topic::kFlights, Topic::kRestaurants};
inline constexpr std::array kAllChallenges = {
    Challenge::kShiftedIntent, Challenge::kNoisyInput, Challenge::kUnderspecifiedIntent,
    Challenge::kMultiIntent, Challenge::kPerfectIntent};
inline constexpr std::array kAllLengthClasses = {LengthClass::kShort, LengthClass::kMedium,
                                                 LengthClass::kLong};

std::string_view to_string(Speaker v);
std::string_view to_string(Topic v);
std::string_view to_string(Challenge v);
std::string_view to_string(LengthClass v);
std::string_view to_string(Provenance v);
std::string_view to_string(Split v);

// Parsers throw Error(kSchemaError) on unknown names.
Speaker parse_speaker(std::string_view s);
Topic parse_topic(std::string_view s);
Challenge parse_challenge(std::string_view s);
std::optional<Challenge> try_parse_challenge(std::string_view s);
LengthClass parse_length_class(std::string_view s);
Provenance parse_provenance(std::string_view s);
Split parse_split(std::string_view s);

struct Turn {
  Speaker speaker = Speaker::kUser;
  std::string text;

  bool operator==(const Turn&) const = default;
};

struct Conversation {
  std::string id;
  Topic topic = Topic::kCooking;
  Challenge challenge = Challenge::kPerfectIntent;
  LengthClass length_class = LengthClass::kShort;
  std::vector<Turn> turns;
  Provenance provenance = Provenance::kGenerated;

  bool operator==(const Conversation&) const = default;
};

struct Rewrite {
  std::string conversation_id;
  std::string rewriter_id;
  std::string text;
  std::optional<std::string> model_id;

  bool operator==(const Rewrite&) const = default;
};

/// Maximum turn count of any length bucket.
inline constexpr std::size_t kMaxTurns = 20;

/// short: 1-5 turns, medium: 6-10, long: 11-20 (all speakers counted).
LengthClass classify_length(std::size_t turn_count);
LengthClass classify_length(const Conversation& conversation);

enum class Violation {
  kEmptyConversation,
  kEmptyTurn,
  kEmbeddedPrefix,
  kStartsWithAgent,
  kEndsWithAgent,
  kNonAlternating,
  kLengthMismatch,
  kTooLong,
};

std::string_view to_string(Violation v);

struct ValidationReport {
  std::vector<Violation> violations;

  bool valid() const { return violations.empty(); }
  bool contains(Violation v) const;
};

ValidationReport validate_conversation(const Conversation& conversation);

/// Content hash of topic, challenge, provenance and normalized turns.
std::string compute_conversation_id(const Conversation& conversation);
/// Returns a copy with `id` recomputed.
Conversation with_content_id(Conversation conversation);

struct SplitRatios {
  double train = 0.6;
  double val = 0.1;
  double test = 0.3;
};

/// Largest-remainder apportionment of n items; ties go train > val > test.
std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios& ratios);

using SplitAssignment = std::map<std::string, Split>;

/// Seeded shuffle then apportion. When `strata` is given (id -> stratum label),
/// each stratum is apportioned independently.
SplitAssignment split_dataset(const std::vector<std::string>& ids, const SplitRatios& ratios,
                              std::uint64_t seed,
                              const std::map<std::string, std::string>* strata = nullptr);

// JSON ---------------------------------------------------------------------

json to_json(const Turn& turn);
json to_json(const Conversation& conversation);
json to_json(const Rewrite& rewrite);
Conversation conversation_from_json(const json& j);
Rewrite rewrite_from_json(const json& j);

std::vector<Conversation> read_conversations(const std::filesystem::path& path);
void write_conversations(const std::filesystem::path& path,
                         const std::vector<Conversation>& conversations);

}  // namespace convplan
