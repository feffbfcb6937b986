#include "convplan/prompts.hpp"

#include "convplan/error.hpp"

namespace convplan::prompts {

std::string render(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      const auto close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        auto it = values.find(std::string(tmpl.substr(i + 1, close - i - 1)));
        if (it != values.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(tmpl[i++]);
  }
  return out;
}

const std::string_view kGenerationTemplate =
    "Generate a conversation between a USER and an AGENT on the topic:\n"
    "{topic}.\n"
    "The USER begins with a task-oriented query. The AGENT only asks clarifying or follow-up "
    "questions to understand the USER's intent and constraints. It must not solve the task.\n"
    "\n"
    "The conversation should be {conv_len}, stay on-topic, and be coherent.\n"
    "\n"
    "Each conversation must end with a USER utterance and no utterance should include unrelated "
    "or off-topic remarks.\n"
    "\n"
    "The challenge types are:\n"
    "{challenge_instructions}\n"
    "\n"
    "Output a single JSON object with challenge names as keys and conversations as values.\n"
    "Each conversation is a list of strings starting with 'USER:' or 'AGENT:'.\n";

const std::string_view kIn3ConversionTemplate =
    "You will be provided a task sentence and some missing details as a list. Each missing "
    "detail has an inquiry and corresponding options.\n"
    "Your job will be to convert this to a friendly User-Agent conversation. The User begins "
    "conversation with the task. The Agent responds with each missing detail inquiry one at a "
    "time, and the User responds with the option as response.\n"
    "\n"
    "Task: {task}\n"
    "Missing Details: {missing_details}\n"
    "\n"
    "Output Format:\n"
    "Each conversation should a list of strings starting with 'USER:' or 'AGENT:'.\n";

const std::string_view kBasicRewriteTemplate =
    "Summarize the following USER-AGENT conversation\n"
    "\n"
    "Conversation:\n"
    "{conversation}";

const std::string_view kAdvancedRewriteTemplate =
    "Summarize the following USER-AGENT conversation into a single, concise sentence describing "
    "the user's intended task.\n"
    "The summary should reflect the user's goal or intent, in an instruction style.\n"
    "Do not introduce new information. Only include what is stated or clearly implied.\n"
    "\n"
    "Conversation:\n"
    "{conversation}";

const std::string_view kTunedRewriteTemplate =
    "You will be given a task-oriented dialogue between a USER and an AGENT. Your task is to "
    "reinterpret or rewrite the conversation in a format that clearly conveys the USER's intent, "
    "optimized for a downstream planning agent that will decompose the request into actionable "
    "subtasks.\n"
    "Based on your judgment, you may choose to rewrite the conversation or retain the original "
    "format.\n"
    "\n"
    "Conversation: {conversation}";

const std::string_view kPlannerTemplate =
    "You are a planner responsible for creating high-level plans to solve any task. Understand "
    "the user intent from the input and plan accordingly. Consider breaking down complex tasks "
    "into subtasks.\n"
    "\n"
    "Represent your plan as a graph where each node corresponds to a step, and each edge "
    "represents a dependency between two steps.\n"
    "If a node requires the output from a previous node as an input, ensure it is included in "
    "the edge list.\n"
    "\n"
    "The output should be structured in the following JSON format:\n"
    "'nodes': <list of JSON nodes with keys 'id': <node id as integer>, 'name': <sub-task node "
    "name> >,\n"
    "'edges': <list of tuples [node_id, node_id]>\n"
    "\n"
    "Input:\n"
    "{input}";

const std::string_view kJudgeTemplate =
    "You will be given a task-oriented dialogue between a USER and an AGENT as well as two "
    "plans. Your task is to choose the plan that better addresses the user's intent.\n"
    "\n"
    "Please refer to the rubrics below when conducting the comparison: {RUBRICS}\n"
    "\n"
    "The plans are evaluated on their ability to fulfill the above rubrics. Both plans are "
    "considered equally good when they are equally capable of fulfilling the above rubrics. In "
    "that case, output TIE.\n"
    "\n"
    "Conversation: {conversation}\n"
    "Plan A: {planA}\n"
    "Plan B: {planB}\n"
    "\n"
    "Which plan better fulfills the user's request? Reply with 'A', 'B', or 'TIE'.";

const std::string_view kVetTemplate =
    "You are reviewing a synthetic USER-AGENT conversation about the topic: {topic}.\n"
    "The AGENT is only allowed to ask clarifying or follow-up questions; it must not solve the "
    "USER's task or invent results.\n"
    "\n"
    "Conversation:\n"
    "{conversation}\n"
    "\n"
    "Answer with a single JSON object with boolean fields \"agent_solves_task\" (the AGENT "
    "solves the task or hallucinates results) and \"off_topic\" (any utterance is unrelated to "
    "the topic).";

std::string challenge_instructions(const std::vector<Challenge>& challenges) {
  std::string out;
  for (auto c : challenges) {
    out += "- ";
    out += to_string(c);
    out += ": ";
    switch (c) {
      case Challenge::kShiftedIntent:
        out += "the USER changes their goal partway through the conversation; only the latest "
               "goal still matters.";
        break;
      case Challenge::kNoisyInput:
        out += "the USER's messages contain filler, small talk, or irrelevant details that "
               "obscure the main request.";
        break;
      case Challenge::kUnderspecifiedIntent:
        out += "the USER's goal lacks key details needed to act on it, even by the end of the "
               "conversation.";
        break;
      case Challenge::kMultiIntent:
        out += "the USER pursues several distinct goals, stated together or one after another "
               "without clear separation.";
        break;
      case Challenge::kPerfectIntent:
        out += "the USER states a clear, complete, and consistent goal.";
        break;
    }
    out += "\n";
  }
  if (!out.empty()) out.pop_back();
  return out;
}

std::string length_instruction(LengthClass length) {
  switch (length) {
    case LengthClass::kShort:
      return "short (at most 5 USER and AGENT utterances in total)";
    case LengthClass::kMedium:
      return "medium (between 6 and 10 USER and AGENT utterances in total)";
    case LengthClass::kLong:
      return "long (between 11 and 20 USER and AGENT utterances in total)";
  }
  return "short";
}

std::string_view rewrite_template(std::string_view template_id) {
  if (template_id == "basic") return kBasicRewriteTemplate;
  if (template_id == "advanced") return kAdvancedRewriteTemplate;
  if (template_id == "tuned" || template_id == "dpo") return kTunedRewriteTemplate;
  throw Error(ErrorCode::kConfigError, "unknown prompt template '" + std::string(template_id) + "'");
}

}  // namespace convplan::prompts
