#pragma once

// Dataset construction: synthetic generation, IN3 conversion, vetting and
// PII redaction.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "convplan/core.hpp"
#include "convplan/gateway.hpp"

namespace convplan {

struct GenerationSpec {
  Topic topic = Topic::kCooking;
  LengthClass length_class = LengthClass::kShort;
  std::vector<Challenge> challenges;
  std::string model_id = "gpt-4o";
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

GenerationSpec generation_spec_from_json(const json& j);
json to_json(const GenerationSpec& spec);

std::string render_generation_prompt(const GenerationSpec& spec);

/// Parses a generator reply: a JSON object keyed by challenge name whose values
/// are either one conversation (list of prefixed strings) or a list of them.
std::vector<Conversation> parse_generation_output(std::string_view raw, Topic topic);

std::vector<Conversation> generate_conversations(const GenerationSpec& spec,
                                                 const Gateway& gateway);

struct MissingDetail {
  std::string inquiry;
  std::vector<std::string> options;
};

struct In3Record {
  std::string task;
  std::vector<MissingDetail> missing_details;
  /// IN3 carries no topic; the converter falls back to a configured default.
  std::optional<Topic> topic;
};

In3Record in3_record_from_json(const json& j);
json to_json(const In3Record& record);

/// Template conversion: USER states the task, then AGENT asks each inquiry and
/// USER answers with one seeded-random option.
Conversation convert_in3(const In3Record& record, std::uint64_t option_seed,
                         Topic default_topic = Topic::kCooking);

/// Model-driven variant of convert_in3. Throws MalformedGeneration, PrefixError.
Conversation convert_in3_llm(const In3Record& record, const Gateway& gateway,
                             const std::string& model_id, Topic default_topic = Topic::kCooking);

enum class Disposition { kAccept, kReject, kNeedsReview };

std::string_view to_string(Disposition d);

struct VetReport {
  std::string conversation_id;
  std::vector<Violation> violations;
  bool agent_solves_task = false;
  bool off_topic = false;
  Disposition disposition = Disposition::kAccept;
  std::string notes;
};

json to_json(const VetReport& report);

/// Structural checks always run. With a gateway, a judge prompt can raise flags
/// that route to needs_review; model flags never reject on their own.
VetReport vet(const Conversation& conversation, const Gateway* gateway = nullptr,
              const std::string& judge_model_id = "gpt-4o");

struct RedactionResult {
  std::string text;
  std::size_t count = 0;
};

inline constexpr std::string_view kRedactedEmail = "[REDACTED_EMAIL]";
inline constexpr std::string_view kRedactedPhone = "[REDACTED_PHONE]";

/// Emails: local@domain.tld. Phones: optional +country code, optional 3-digit
/// area code (bare or parenthesised), then NNN-NNNN with space/dot/dash
/// separators; digit runs glued to letters or digits are left alone.
RedactionResult redact_text(std::string_view text);

struct RedactedConversation {
  Conversation conversation;
  std::size_t count = 0;
};

/// Redacts every turn and recomputes the content id.
RedactedConversation redact(const Conversation& conversation);

}  // namespace convplan
