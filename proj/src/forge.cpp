#include "convplan/forge.hpp"

#include <cctype>
#include <regex>

#include "convplan/error.hpp"
#include "convplan/prompts.hpp"
#include "convplan/rewriters.hpp"

namespace convplan {

namespace {

Turn parse_prefixed_line(const std::string& line) {
  const auto t = trim(line);
  if (starts_with(t, "USER:")) return {Speaker::kUser, trim(std::string_view(t).substr(5))};
  if (starts_with(t, "AGENT:")) return {Speaker::kAgent, trim(std::string_view(t).substr(6))};
  throw Error(ErrorCode::kPrefixError, "line lacks USER:/AGENT: prefix: '" + t.substr(0, 60) + "'");
}

Conversation build_conversation(const json& lines, Topic topic, Challenge challenge) {
  Conversation c;
  c.topic = topic;
  c.challenge = challenge;
  c.provenance = Provenance::kGenerated;
  for (const auto& line : lines) {
    if (!line.is_string()) {
      throw Error(ErrorCode::kMalformedGeneration, "conversation lines must be strings");
    }
    c.turns.push_back(parse_prefixed_line(line.get<std::string>()));
  }
  if (c.turns.empty()) throw Error(ErrorCode::kMalformedGeneration, "empty conversation");
  c.length_class = classify_length(c);
  return with_content_id(std::move(c));
}

const std::regex& email_re() {
  static const std::regex re(R"([A-Za-z0-9._%+\-]+@[A-Za-z0-9\-]+(\.[A-Za-z0-9\-]+)*\.[A-Za-z]{2,})");
  return re;
}

const std::regex& phone_re() {
  static const std::regex re(
      R"((\+\d{1,3}[ .\-]?)?(\(\d{3}\)[ .\-]?|\d{3}[ .\-])?\d{3}[ .\-]\d{4}(?![\dA-Za-z]))");
  return re;
}

bool glued(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::string replace_matches(std::string_view text, const std::regex& re,
                            std::string_view replacement, std::size_t& count) {
  std::string out;
  const std::string s(text);
  auto it = std::sregex_iterator(s.begin(), s.end(), re);
  std::size_t last = 0;
  for (; it != std::sregex_iterator(); ++it) {
    const auto pos = static_cast<std::size_t>(it->position());
    if (pos < last) continue;
    if (pos > 0 && glued(s[pos - 1]) && s[pos] != '(' && s[pos] != '+') continue;
    out.append(s, last, pos - last);
    out += replacement;
    last = pos + static_cast<std::size_t>(it->length());
    ++count;
  }
  out.append(s, last, std::string::npos);
  return out;
}

}  // namespace

GenerationSpec generation_spec_from_json(const json& j) {
  GenerationSpec s;
  s.topic = parse_topic(j.at("topic").get<std::string>());
  s.length_class = parse_length_class(j.at("length_class").get<std::string>());
  for (const auto& c : j.at("challenges")) s.challenges.push_back(parse_challenge(c.get<std::string>()));
  if (s.challenges.empty()) throw Error(ErrorCode::kConfigError, "generation spec has no challenges");
  s.model_id = j.value("model_id", s.model_id);
  s.temperature = j.value("temperature", 1.0);
  s.seed = j.value("seed", std::uint64_t{0});
  return s;
}

json to_json(const GenerationSpec& s) {
  json challenges = json::array();
  for (auto c : s.challenges) challenges.push_back(to_string(c));
  return {{"topic", to_string(s.topic)},
          {"length_class", to_string(s.length_class)},
          {"challenges", std::move(challenges)},
          {"model_id", s.model_id},
          {"temperature", s.temperature},
          {"seed", s.seed}};
}

std::string render_generation_prompt(const GenerationSpec& spec) {
  return prompts::render(prompts::kGenerationTemplate,
                         {{"topic", std::string(to_string(spec.topic))},
                          {"conv_len", prompts::length_instruction(spec.length_class)},
                          {"challenge_instructions", prompts::challenge_instructions(spec.challenges)}});
}

std::vector<Conversation> parse_generation_output(std::string_view raw, Topic topic) {
  auto parsed = extract_first_json_object(raw);
  if (!parsed) throw Error(ErrorCode::kMalformedGeneration, "generator reply has no JSON object");
  std::vector<Conversation> out;
  for (const auto& [key, value] : parsed->items()) {
    const auto challenge = try_parse_challenge(key);
    if (!challenge) {
      throw Error(ErrorCode::kMalformedGeneration, "unknown challenge key '" + key + "'");
    }
    if (!value.is_array() || value.empty()) {
      throw Error(ErrorCode::kMalformedGeneration, "challenge '" + key + "' has no conversation");
    }
    if (value.front().is_array()) {
      for (const auto& conv : value) out.push_back(build_conversation(conv, topic, *challenge));
    } else {
      out.push_back(build_conversation(value, topic, *challenge));
    }
  }
  return out;
}

std::vector<Conversation> generate_conversations(const GenerationSpec& spec,
                                                 const Gateway& gateway) {
  if (spec.challenges.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "generation spec has no challenges");
  }
  const auto response = gateway.complete(
      ChatRequest::single(spec.model_id, render_generation_prompt(spec), spec.temperature));
  return parse_generation_output(response.text, spec.topic);
}

In3Record in3_record_from_json(const json& j) {
  try {
    In3Record r;
    r.task = j.at("task").get<std::string>();
    for (const auto& d : j.value("missing_details", json::array())) {
      MissingDetail md;
      md.inquiry = d.at("inquiry").get<std::string>();
      md.options = d.at("options").get<std::vector<std::string>>();
      r.missing_details.push_back(std::move(md));
    }
    if (j.contains("topic")) r.topic = parse_topic(j["topic"].get<std::string>());
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kSchemaError, std::string("IN3 record: ") + e.what());
  }
}

json to_json(const In3Record& r) {
  json details = json::array();
  for (const auto& d : r.missing_details) {
    details.push_back({{"inquiry", d.inquiry}, {"options", d.options}});
  }
  json j = {{"task", r.task}, {"missing_details", std::move(details)}};
  if (r.topic) j["topic"] = to_string(*r.topic);
  return j;
}

Conversation convert_in3(const In3Record& record, std::uint64_t option_seed, Topic default_topic) {
  if (trim(record.task).empty()) throw Error(ErrorCode::kInvalidArgument, "IN3 task is empty");
  for (const auto& d : record.missing_details) {
    if (d.options.empty()) {
      throw Error(ErrorCode::kInvalidArgument, "IN3 detail '" + d.inquiry + "' has no options");
    }
  }
  Rng rng(splitmix64(option_seed ^ seed_from_string(record.task)));
  Conversation c;
  c.topic = record.topic.value_or(default_topic);
  c.challenge = Challenge::kUnderspecifiedIntent;
  c.provenance = Provenance::kIn3Converted;
  c.turns.push_back({Speaker::kUser, record.task});
  for (const auto& d : record.missing_details) {
    c.turns.push_back({Speaker::kAgent, d.inquiry});
    c.turns.push_back({Speaker::kUser, d.options[rng.uniform(d.options.size())]});
  }
  c.length_class = classify_length(c);
  return with_content_id(std::move(c));
}

Conversation convert_in3_llm(const In3Record& record, const Gateway& gateway,
                             const std::string& model_id, Topic default_topic) {
  if (trim(record.task).empty()) throw Error(ErrorCode::kInvalidArgument, "IN3 task is empty");
  json details = json::array();
  for (const auto& d : record.missing_details) {
    details.push_back({{"inquiry", d.inquiry}, {"options", d.options}});
  }
  const auto prompt = prompts::render(prompts::kIn3ConversionTemplate,
                                      {{"task", record.task}, {"missing_details", details.dump()}});
  const auto reply = gateway.complete(ChatRequest::single(model_id, prompt, 0.0)).text;
  const auto open = reply.find('[');
  const auto close = reply.rfind(']');
  json lines;
  if (open != std::string::npos && close != std::string::npos && close > open) {
    lines = json::parse(reply.substr(open, close - open + 1), nullptr, false);
  }
  if (!lines.is_array() || lines.empty()) {
    throw Error(ErrorCode::kMalformedGeneration, "IN3 conversion reply has no list of lines");
  }
  auto c = build_conversation(lines, record.topic.value_or(default_topic),
                              Challenge::kUnderspecifiedIntent);
  c.provenance = Provenance::kIn3Converted;
  return with_content_id(std::move(c));
}

std::string_view to_string(Disposition d) {
  switch (d) {
    case Disposition::kAccept: return "accept";
    case Disposition::kReject: return "reject";
    case Disposition::kNeedsReview: return "needs_review";
  }
  return "accept";
}

json to_json(const VetReport& r) {
  json violations = json::array();
  for (auto v : r.violations) violations.push_back(to_string(v));
  return {{"conversation_id", r.conversation_id},
          {"violations", std::move(violations)},
          {"flags", {{"agent_solves_task", r.agent_solves_task}, {"off_topic", r.off_topic}}},
          {"disposition", to_string(r.disposition)},
          {"notes", r.notes}};
}

VetReport vet(const Conversation& conversation, const Gateway* gateway,
              const std::string& judge_model_id) {
  VetReport report;
  report.conversation_id = conversation.id;
  report.violations = validate_conversation(conversation).violations;
  if (!report.violations.empty()) {
    report.disposition = Disposition::kReject;
    return report;
  }
  if (gateway == nullptr) return report;

  const auto prompt = prompts::render(prompts::kVetTemplate,
                                      {{"topic", std::string(to_string(conversation.topic))},
                                       {"conversation", serialize_dialogue(conversation)}});
  const auto reply = gateway->complete(ChatRequest::single(judge_model_id, prompt, 0.0));
  auto flags = extract_first_json_object(reply.text);
  if (!flags) {
    report.disposition = Disposition::kNeedsReview;
    report.notes = "vetting reply was not parseable";
    return report;
  }
  report.agent_solves_task = flags->value("agent_solves_task", false);
  report.off_topic = flags->value("off_topic", false);
  if (report.agent_solves_task || report.off_topic) report.disposition = Disposition::kNeedsReview;
  return report;
}

RedactionResult redact_text(std::string_view text) {
  RedactionResult r;
  auto no_email = replace_matches(text, email_re(), kRedactedEmail, r.count);
  r.text = replace_matches(no_email, phone_re(), kRedactedPhone, r.count);
  return r;
}

RedactedConversation redact(const Conversation& conversation) {
  RedactedConversation out{conversation, 0};
  for (auto& turn : out.conversation.turns) {
    auto r = redact_text(turn.text);
    turn.text = std::move(r.text);
    out.count += r.count;
  }
  out.conversation = with_content_id(std::move(out.conversation));
  return out;
}

}  // namespace convplan
