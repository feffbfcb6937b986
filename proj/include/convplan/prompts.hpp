#pragma once

// Prompt templates for every model-backed stage. Placeholders are `{name}`.

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "convplan/core.hpp"

namespace convplan::prompts {

/// Replaces every `{key}` with its value; unknown placeholders are left as-is.
std::string render(std::string_view tmpl, const std::map<std::string, std::string>& values);

extern const std::string_view kGenerationTemplate;
extern const std::string_view kIn3ConversionTemplate;
extern const std::string_view kBasicRewriteTemplate;
extern const std::string_view kAdvancedRewriteTemplate;
extern const std::string_view kTunedRewriteTemplate;
extern const std::string_view kPlannerTemplate;
extern const std::string_view kJudgeTemplate;
extern const std::string_view kVetTemplate;

/// One instruction line per challenge, keyed by the challenge's wire name.
std::string challenge_instructions(const std::vector<Challenge>& challenges);
std::string length_instruction(LengthClass length);

/// Looks up a rewrite template by id: "basic", "advanced" or "tuned".
std::string_view rewrite_template(std::string_view template_id);

}  // namespace convplan::prompts
