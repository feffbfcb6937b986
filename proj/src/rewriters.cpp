#include "convplan/rewriters.hpp"

#include "convplan/error.hpp"
#include "convplan/prompts.hpp"

namespace convplan {

namespace {

constexpr std::string_view kUserPrefix = "USER: ";
constexpr std::string_view kAgentPrefix = "AGENT: ";

Rewrite model_rewrite(const Conversation& conversation, std::string_view tmpl,
                      const Gateway& gateway, const std::string& model_id, double temperature,
                      std::string rewriter_id) {
  const auto prompt =
      prompts::render(tmpl, {{"conversation", serialize_dialogue(conversation)}});
  ChatResponse response;
  try {
    response = gateway.complete(ChatRequest::single(model_id, prompt, temperature));
  } catch (const Error& e) {
    throw Error(ErrorCode::kRewriteFailed,
                rewriter_id + " on " + conversation.id + ": " + e.what(), e.code());
  }
  auto text = trim(response.text);
  if (text.empty()) {
    throw Error(ErrorCode::kRewriteFailed, rewriter_id + " on " + conversation.id + ": empty reply",
                ErrorCode::kEmptyOutput);
  }
  return Rewrite{conversation.id, std::move(rewriter_id), std::move(text), model_id};
}

}  // namespace

std::string serialize_dialogue(const std::vector<Turn>& turns) {
  std::string out;
  for (std::size_t i = 0; i < turns.size(); ++i) {
    if (i > 0) out += '\n';
    out += turns[i].speaker == Speaker::kUser ? kUserPrefix : kAgentPrefix;
    out += turns[i].text;
  }
  return out;
}

std::string serialize_dialogue(const Conversation& conversation) {
  return serialize_dialogue(conversation.turns);
}

std::vector<Turn> parse_dialogue(std::string_view text) {
  std::vector<Turn> turns;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = text.substr(pos, end - pos);
    if (starts_with(line, kUserPrefix)) {
      turns.push_back({Speaker::kUser, std::string(line.substr(kUserPrefix.size()))});
    } else if (starts_with(line, kAgentPrefix)) {
      turns.push_back({Speaker::kAgent, std::string(line.substr(kAgentPrefix.size()))});
    } else if (turns.empty()) {
      throw Error(ErrorCode::kPrefixError, "dialogue must start with 'USER: ' or 'AGENT: '");
    } else {
      turns.back().text += '\n';
      turns.back().text += line;
    }
    pos = end + 1;
  }
  return turns;
}

std::string_view to_string(RewriterKind kind) {
  switch (kind) {
    case RewriterKind::kDummy: return "dummy";
    case RewriterKind::kBasic: return "basic";
    case RewriterKind::kAdvanced: return "advanced";
    case RewriterKind::kTuned: return "tuned";
  }
  return "dummy";
}

RewriterKind parse_rewriter_kind(std::string_view s) {
  if (s == "dummy") return RewriterKind::kDummy;
  if (s == "basic") return RewriterKind::kBasic;
  if (s == "advanced") return RewriterKind::kAdvanced;
  if (s == "tuned") return RewriterKind::kTuned;
  throw Error(ErrorCode::kConfigError, "unknown rewriter kind '" + std::string(s) + "'");
}

void RewriterSpec::validate() const {
  if (rewriter_id.empty()) throw Error(ErrorCode::kConfigError, "rewriter id is empty");
  if (kind != RewriterKind::kDummy && (!model_id || model_id->empty())) {
    throw Error(ErrorCode::kConfigError,
                "rewriter '" + rewriter_id + "' of kind " + std::string(to_string(kind)) +
                    " requires a model_id");
  }
  if (temperature < 0.0 || temperature > 2.0) {
    throw Error(ErrorCode::kConfigError, "rewriter temperature must be in [0, 2]");
  }
  if (kind != RewriterKind::kDummy) prompts::rewrite_template(effective_template());
}

std::string RewriterSpec::effective_template() const {
  if (!template_id.empty()) return template_id;
  return std::string(to_string(kind));
}

RewriterSpec rewriter_spec_from_json(const json& j) {
  RewriterSpec s;
  s.rewriter_id = j.at("id").get<std::string>();
  s.kind = parse_rewriter_kind(j.value("kind", s.rewriter_id));
  if (j.contains("model_id") && !j["model_id"].is_null()) s.model_id = j["model_id"].get<std::string>();
  s.template_id = j.value("template", std::string());
  s.temperature = j.value("temperature", 0.0);
  s.validate();
  return s;
}

json to_json(const RewriterSpec& s) {
  json j = {{"id", s.rewriter_id},
            {"kind", to_string(s.kind)},
            {"template", s.template_id},
            {"temperature", s.temperature}};
  j["model_id"] = s.model_id ? json(*s.model_id) : json(nullptr);
  return j;
}

Rewrite rewrite_dummy(const Conversation& conversation, std::string rewriter_id) {
  return Rewrite{conversation.id, std::move(rewriter_id), serialize_dialogue(conversation),
                 std::nullopt};
}

Rewrite rewrite_basic(const Conversation& conversation, const Gateway& gateway,
                      const std::string& model_id, std::string rewriter_id) {
  return model_rewrite(conversation, prompts::kBasicRewriteTemplate, gateway, model_id, 0.0,
                       std::move(rewriter_id));
}

Rewrite rewrite_advanced(const Conversation& conversation, const Gateway& gateway,
                         const std::string& model_id, std::string rewriter_id) {
  return model_rewrite(conversation, prompts::kAdvancedRewriteTemplate, gateway, model_id, 0.0,
                       std::move(rewriter_id));
}

Rewrite rewrite_tuned(const Conversation& conversation, const RewriterSpec& spec,
                      const Gateway& gateway) {
  if (spec.kind != RewriterKind::kTuned) {
    throw Error(ErrorCode::kConfigError, "rewrite_tuned needs a spec of kind tuned");
  }
  spec.validate();
  const auto tmpl = spec.template_id.empty() ? prompts::kTunedRewriteTemplate
                                             : prompts::rewrite_template(spec.template_id);
  return model_rewrite(conversation, tmpl, gateway, *spec.model_id, spec.temperature,
                       spec.rewriter_id);
}

Rewrite run_rewriter(const Conversation& conversation, const RewriterSpec& spec,
                     const Gateway* gateway) {
  spec.validate();
  if (spec.kind == RewriterKind::kDummy) return rewrite_dummy(conversation, spec.rewriter_id);
  if (gateway == nullptr) {
    throw Error(ErrorCode::kConfigError, "rewriter '" + spec.rewriter_id + "' needs a gateway");
  }
  if (spec.kind == RewriterKind::kTuned) return rewrite_tuned(conversation, spec, *gateway);
  return model_rewrite(conversation, prompts::rewrite_template(spec.effective_template()), *gateway,
                       *spec.model_id, spec.temperature, spec.rewriter_id);
}

}  // namespace convplan
