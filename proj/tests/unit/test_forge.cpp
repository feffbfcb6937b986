#include <regex>

#include <gtest/gtest.h>

#include "convplan/forge.hpp"
#include "convplan/rewriters.hpp"
#include "test_util.hpp"

using namespace convplan;

TEST(Generation, ParsesSingleAndNestedConversations) {
  const std::string raw = R"(Sure! {"perfect_intent": ["USER: boil pasta", "AGENT: how much?", "USER: 200g"],
    "noisy_input": [["USER: pastaa plz"], ["USER: hw to boil egg", "AGENT: soft?", "USER: hard"]]})";
  const auto convs = parse_generation_output(raw, Topic::kCooking);
  ASSERT_EQ(convs.size(), 3u);
  std::size_t perfect = 0, noisy = 0;
  for (const auto& c : convs) {
    EXPECT_EQ(c.topic, Topic::kCooking);
    EXPECT_EQ(c.provenance, Provenance::kGenerated);
    EXPECT_EQ(c.id, compute_conversation_id(c));
    if (c.challenge == Challenge::kPerfectIntent) ++perfect;
    if (c.challenge == Challenge::kNoisyInput) ++noisy;
  }
  EXPECT_EQ(perfect, 1u);
  EXPECT_EQ(noisy, 2u);
  for (const auto& c : convs) {
    if (c.challenge == Challenge::kPerfectIntent) EXPECT_EQ(c.turns.size(), 3u);
  }
}

TEST(Generation, RejectsMalformedReplies) {
  EXPECT_CONVPLAN_ERROR(parse_generation_output("no json here", Topic::kHealth),
                     ErrorCode::kMalformedGeneration);
  EXPECT_CONVPLAN_ERROR(parse_generation_output(R"({"made_up": ["USER: hi"]})", Topic::kHealth),
                     ErrorCode::kMalformedGeneration);
  EXPECT_CONVPLAN_ERROR(parse_generation_output(R"({"multi_intent": []})", Topic::kHealth),
                     ErrorCode::kMalformedGeneration);
  EXPECT_CONVPLAN_ERROR(parse_generation_output(R"({"multi_intent": ["hello there"]})", Topic::kHealth),
                     ErrorCode::kPrefixError);
}

TEST(Generation, PromptMentionsTopicAndChallenges) {
  GenerationSpec spec;
  spec.topic = Topic::kFlights;
  spec.length_class = LengthClass::kMedium;
  spec.challenges = {Challenge::kShiftedIntent, Challenge::kMultiIntent};
  const auto prompt = render_generation_prompt(spec);
  EXPECT_NE(prompt.find("flights"), std::string::npos);
  EXPECT_NE(prompt.find("shifted_intent"), std::string::npos);
  EXPECT_NE(prompt.find("multi_intent"), std::string::npos);
  EXPECT_EQ(prompt.find('{' + std::string("topic}")), std::string::npos);
}

TEST(Generation, EndToEndThroughMock) {
  GenerationSpec spec;
  spec.topic = Topic::kProgramming;
  spec.challenges = {Challenge::kPerfectIntent};
  Gateway gw(testutil::mock({}, R"({"perfect_intent": ["USER: sort a list in python"]})"));
  const auto convs = generate_conversations(spec, gw);
  ASSERT_EQ(convs.size(), 1u);
  EXPECT_EQ(convs[0].topic, Topic::kProgramming);
}

namespace {

In3Record two_detail_record() {
  In3Record r;
  r.task = "Plan a trip to Rome";
  r.missing_details = {{"When are you travelling?", {"May", "June", "July"}},
                       {"What is your budget?", {"low", "high"}}};
  return r;
}

}  // namespace

TEST(In3, TemplateConversionShape) {
  const auto r = two_detail_record();
  const auto c = convert_in3(r, 7, Topic::kFlights);
  ASSERT_EQ(c.turns.size(), 5u);
  EXPECT_EQ(c.turns[0], (Turn{Speaker::kUser, r.task}));
  EXPECT_EQ(c.turns[1].speaker, Speaker::kAgent);
  EXPECT_EQ(c.turns[1].text, r.missing_details[0].inquiry);
  const auto& opts0 = r.missing_details[0].options;
  EXPECT_NE(std::find(opts0.begin(), opts0.end(), c.turns[2].text), opts0.end());
  const auto& opts1 = r.missing_details[1].options;
  EXPECT_NE(std::find(opts1.begin(), opts1.end(), c.turns[4].text), opts1.end());
  EXPECT_EQ(c.challenge, Challenge::kUnderspecifiedIntent);
  EXPECT_EQ(c.provenance, Provenance::kIn3Converted);
  EXPECT_EQ(c.topic, Topic::kFlights);
  EXPECT_EQ(c.length_class, LengthClass::kShort);
  EXPECT_TRUE(validate_conversation(c).valid());
}

TEST(In3, DeterministicPerSeed) {
  const auto r = two_detail_record();
  EXPECT_EQ(convert_in3(r, 3), convert_in3(r, 3));
  bool any_difference = false;
  for (std::uint64_t s = 0; s < 50 && !any_difference; ++s) {
    any_difference = convert_in3(r, s).turns != convert_in3(r, 3).turns;
  }
  EXPECT_TRUE(any_difference);
}

TEST(In3, RejectsEmptyInputs) {
  In3Record r;
  EXPECT_CONVPLAN_ERROR(convert_in3(r, 0), ErrorCode::kInvalidArgument);
  r.task = "x";
  r.missing_details = {{"which?", {}}};
  EXPECT_CONVPLAN_ERROR(convert_in3(r, 0), ErrorCode::kInvalidArgument);
}

TEST(In3, JsonRoundTrip) {
  auto r = two_detail_record();
  r.topic = Topic::kRestaurants;
  const auto back = in3_record_from_json(to_json(r));
  EXPECT_EQ(back.task, r.task);
  ASSERT_EQ(back.missing_details.size(), 2u);
  EXPECT_EQ(back.missing_details[1].options, r.missing_details[1].options);
  EXPECT_EQ(back.topic, r.topic);
}

TEST(In3, LlmConversion) {
  Gateway gw(testutil::mock(
      {}, R"(Here: ["USER: Plan a trip to Rome", "AGENT: When?", "USER: In May"])"));
  const auto c = convert_in3_llm(two_detail_record(), gw, "m", Topic::kFlights);
  EXPECT_EQ(c.turns.size(), 3u);
  EXPECT_EQ(c.provenance, Provenance::kIn3Converted);
  EXPECT_EQ(c.challenge, Challenge::kUnderspecifiedIntent);

  Gateway bad(testutil::mock({}, "I cannot do that"));
  EXPECT_CONVPLAN_ERROR(convert_in3_llm(two_detail_record(), bad, "m"),
                     ErrorCode::kMalformedGeneration);
}

TEST(Vet, StructuralViolationsReject) {
  Conversation c;
  c.turns = {{Speaker::kAgent, "hi"}};
  c.length_class = LengthClass::kShort;
  c = with_content_id(c);
  const auto r = vet(c);
  EXPECT_EQ(r.disposition, Disposition::kReject);
  EXPECT_FALSE(r.violations.empty());
}

TEST(Vet, ModelFlagsOnlyRouteToReview) {
  const auto c = testutil::conversation({"USER: find a flight", "AGENT: where to?", "USER: Oslo"},
                                        Challenge::kPerfectIntent, Topic::kFlights);
  Gateway clean(testutil::mock({}, R"({"agent_solves_task": false, "off_topic": false})"));
  EXPECT_EQ(vet(c, &clean).disposition, Disposition::kAccept);
  Gateway flagged(testutil::mock({}, R"({"agent_solves_task": true, "off_topic": false})"));
  const auto r = vet(c, &flagged);
  EXPECT_EQ(r.disposition, Disposition::kNeedsReview);
  EXPECT_TRUE(r.agent_solves_task);
  Gateway garbled(testutil::mock({}, "maybe?"));
  EXPECT_EQ(vet(c, &garbled).disposition, Disposition::kNeedsReview);
  EXPECT_EQ(vet(c).disposition, Disposition::kAccept);
}

TEST(Redaction, Emails) {
  const auto r = redact_text("mail a@b.com now");
  EXPECT_EQ(r.text, "mail [REDACTED_EMAIL] now");
  EXPECT_EQ(r.count, 1u);
}

TEST(Redaction, MixedCountMatchesOracle) {
  const std::string text = "call +1 555-0100 and x@y.org";
  // Independent, deliberately loose patterns for the two fixtures.
  const std::regex email(R"(\S+@\S+\.\w+)");
  const std::regex phone(R"(\+?\d[\d \-]{6,}\d)");
  const auto expected = std::distance(std::sregex_iterator(text.begin(), text.end(), email), {}) +
                        std::distance(std::sregex_iterator(text.begin(), text.end(), phone), {});
  const auto r = redact_text(text);
  EXPECT_EQ(static_cast<long>(r.count), expected);
  EXPECT_EQ(r.count, 2u);
  EXPECT_EQ(r.text, "call [REDACTED_PHONE] and [REDACTED_EMAIL]");
}

TEST(Redaction, PhoneVariants) {
  EXPECT_EQ(redact_text("(555) 123-4567").text, "[REDACTED_PHONE]");
  EXPECT_EQ(redact_text("555.123.4567").text, "[REDACTED_PHONE]");
  EXPECT_EQ(redact_text("order 1234567890123").count, 0u);
  EXPECT_EQ(redact_text("sku A555-0100").count, 0u);
}

TEST(Redaction, Idempotent) {
  const auto once = redact_text("x@y.org or 555-0100");
  const auto twice = redact_text(once.text);
  EXPECT_EQ(twice.text, once.text);
  EXPECT_EQ(twice.count, 0u);
}

TEST(Redaction, ConversationIdRecomputed) {
  const auto c = testutil::conversation({"USER: email me at jo@example.com"});
  const auto r = redact(c);
  EXPECT_EQ(r.count, 1u);
  EXPECT_NE(r.conversation.id, c.id);
  EXPECT_EQ(r.conversation.id, compute_conversation_id(r.conversation));
}

TEST(Rewriters, DummyIsVerbatimDialogue) {
  const auto c = testutil::conversation({"USER: a", "AGENT: b", "USER: c"});
  const auto r = rewrite_dummy(c);
  EXPECT_EQ(r.text, "USER: a\nAGENT: b\nUSER: c");
  EXPECT_EQ(parse_dialogue(r.text), c.turns);
  EXPECT_EQ(parse_dialogue(r.text + "\n"), c.turns);
  EXPECT_EQ(parse_dialogue("USER: two\nlines\nAGENT: ok").front().text, "two\nlines");
  EXPECT_FALSE(r.model_id.has_value());
}

TEST(Rewriters, ModelRewriteWrapsFailures) {
  const auto c = testutil::conversation({"USER: a"});
  Gateway ok(testutil::mock({}, "  the task  "));
  const auto r = rewrite_basic(c, ok, "m");
  EXPECT_EQ(r.text, "the task");
  EXPECT_EQ(r.model_id, "m");

  Gateway empty(testutil::mock({}, "   "));
  try {
    rewrite_advanced(c, empty, "m");
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kRewriteFailed);
    EXPECT_EQ(e.cause(), ErrorCode::kEmptyOutput);
  }
  MockRule down;
  down.pattern = ".";
  down.error = ErrorCode::kTimeout;
  auto cfg = testutil::mock({down});
  cfg.max_retries = 0;
  Gateway slow(cfg);
  try {
    rewrite_basic(c, slow, "m");
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kRewriteFailed);
    EXPECT_EQ(e.cause(), ErrorCode::kTimeout);
  }
}

TEST(Rewriters, TunedNeedsModel) {
  RewriterSpec spec;
  spec.rewriter_id = "tuned";
  spec.kind = RewriterKind::kTuned;
  EXPECT_CONVPLAN_ERROR(spec.validate(), ErrorCode::kConfigError);
  const auto c = testutil::conversation({"USER: a"});
  EXPECT_CONVPLAN_ERROR(run_rewriter(c, spec, nullptr), ErrorCode::kConfigError);
}
