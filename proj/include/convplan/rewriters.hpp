#pragma once

#include <optional>
#include <string>
#include <vector>

#include "convplan/core.hpp"
#include "convplan/gateway.hpp"

namespace convplan {

/// Canonical dialogue text: "USER: ..." / "AGENT: ..." lines joined by LF.
/// Every prompt that embeds a conversation uses this form.
std::string serialize_dialogue(const std::vector<Turn>& turns);
std::string serialize_dialogue(const Conversation& conversation);

/// Inverse of serialize_dialogue. Lines without a speaker prefix continue the
/// previous turn. Throws PrefixError if the first line has no prefix.
std::vector<Turn> parse_dialogue(std::string_view text);

enum class RewriterKind { kDummy, kBasic, kAdvanced, kTuned };

std::string_view to_string(RewriterKind kind);
RewriterKind parse_rewriter_kind(std::string_view s);

struct RewriterSpec {
  std::string rewriter_id;
  RewriterKind kind = RewriterKind::kDummy;
  std::optional<std::string> model_id;
  /// Empty selects the kind's default template.
  std::string template_id;
  double temperature = 0.0;

  /// Throws ConfigError (e.g. tuned without a model id).
  void validate() const;
  std::string effective_template() const;
};

RewriterSpec rewriter_spec_from_json(const json& j);
json to_json(const RewriterSpec& spec);

Rewrite rewrite_dummy(const Conversation& conversation, std::string rewriter_id = "dummy");

Rewrite rewrite_basic(const Conversation& conversation, const Gateway& gateway,
                      const std::string& model_id, std::string rewriter_id = "basic");

Rewrite rewrite_advanced(const Conversation& conversation, const Gateway& gateway,
                         const std::string& model_id, std::string rewriter_id = "advanced");

Rewrite rewrite_tuned(const Conversation& conversation, const RewriterSpec& spec,
                      const Gateway& gateway);

/// Dispatches on spec.kind. `gateway` may be null only for dummy rewriters.
Rewrite run_rewriter(const Conversation& conversation, const RewriterSpec& spec,
                     const Gateway* gateway);

}  // namespace convplan
