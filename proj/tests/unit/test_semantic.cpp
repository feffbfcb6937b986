#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "convplan/semantic.hpp"
#include "test_util.hpp"

using namespace convplan;

namespace {

TableEmbeddingProvider uw_table() {
  return TableEmbeddingProvider({{"u", {1.0, 0.0}}, {"w", {0.5, std::sqrt(3.0) / 2.0}}});
}

// Greedy-matching F1 computed directly from vectors, independent of the library.
struct Prf {
  double p, r, f;
};

Prf oracle_bertscore(const std::vector<std::vector<double>>& cand,
                     const std::vector<std::vector<double>>& ref) {
  auto cos = [](const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      dot += a[i] * b[i];
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    return dot / std::sqrt(na * nb);
  };
  double p = 0, r = 0;
  for (const auto& c : cand) {
    double best = -2;
    for (const auto& x : ref) best = std::max(best, cos(c, x));
    p += best;
  }
  for (const auto& x : ref) {
    double best = -2;
    for (const auto& c : cand) best = std::max(best, cos(c, x));
    r += best;
  }
  p /= static_cast<double>(cand.size());
  r /= static_cast<double>(ref.size());
  return {p, r, 2 * p * r / (p + r)};
}

}  // namespace

TEST(Tokenize, LowercasesAndSplits) {
  EXPECT_EQ(tokenize("Book a Hotel; check-in 3pm!"),
            (std::vector<std::string>{"book", "a", "hotel", "check", "in", "3pm"}));
  EXPECT_TRUE(tokenize(" ;; ").empty());
}

TEST(BertScore, HandComputedTable) {
  const auto t = uw_table();
  const auto s = bertscore("u", "u w", t);
  EXPECT_NEAR(s.precision, 1.0, 1e-12);
  EXPECT_NEAR(s.recall, 0.75, 1e-12);
  EXPECT_NEAR(s.f1, 6.0 / 7.0, 1e-12);
  EXPECT_NEAR(s.distance(), 1.0 / 7.0, 1e-12);
  const auto swapped = bertscore("u w", "u", t);
  EXPECT_NEAR(swapped.precision, 0.75, 1e-12);
  EXPECT_NEAR(swapped.recall, 1.0, 1e-12);
}

TEST(BertScore, MatchesOracleOnRandomTables) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g(0, 1);
  for (int trial = 0; trial < 50; ++trial) {
    std::map<std::string, std::vector<double>> table;
    const std::vector<std::string> toks{"a", "b", "c", "d", "e"};
    for (const auto& tok : toks) table[tok] = {g(rng), g(rng), g(rng)};
    TableEmbeddingProvider provider(table);
    std::uniform_int_distribution<int> len(1, 4), pick(0, 4);
    std::string cand, ref;
    std::vector<std::vector<double>> cv, rv;
    for (int i = len(rng); i > 0; --i) {
      const auto& tok = toks[pick(rng)];
      cand += tok + " ";
      cv.push_back(table[tok]);
    }
    for (int i = len(rng); i > 0; --i) {
      const auto& tok = toks[pick(rng)];
      ref += tok + " ";
      rv.push_back(table[tok]);
    }
    const auto got = bertscore(cand, ref, provider);
    const auto want = oracle_bertscore(cv, rv);
    EXPECT_NEAR(got.precision, want.p, 1e-9);
    EXPECT_NEAR(got.recall, want.r, 1e-9);
    EXPECT_NEAR(got.f1, want.f, 1e-9);
  }
}

TEST(BertScore, Errors) {
  const auto t = uw_table();
  EXPECT_CONVPLAN_ERROR(bertscore("", "u", t), ErrorCode::kEmptyText);
  EXPECT_CONVPLAN_ERROR(bertscore("u", "zzz", t), ErrorCode::kInvalidArgument);
  EXPECT_CONVPLAN_ERROR(TableEmbeddingProvider({{"a", {1, 0}}, {"b", {1, 0, 0}}}),
                     ErrorCode::kDimensionMismatch);
}

TEST(SyntheticEmbedding, DeterministicUnitVectors) {
  SyntheticEmbeddingProvider a(32), b(32), salted(32, 9);
  const auto v = a.vector_for("hotel");
  EXPECT_EQ(v, b.vector_for("hotel"));
  EXPECT_NE(v, salted.vector_for("hotel"));
  double norm = 0;
  for (double x : v) norm += x * x;
  EXPECT_NEAR(norm, 1.0, 1e-12);
  EXPECT_NEAR(bertscore("book hotel", "book hotel", a).f1, 1.0, 1e-12);
}

TEST(PlanText, OrderedByIdAndEmptyRejected) {
  Plan p;
  p.nodes = {{3, "third"}, {1, "first"}, {2, "second"}};
  EXPECT_EQ(plan_text(p), "first; second; third");
  EXPECT_CONVPLAN_ERROR(plan_text(Plan{}), ErrorCode::kEmptyPlan);
  SyntheticEmbeddingProvider s;
  EXPECT_NEAR(semantic_distance(p, p, s), 0.0, 1e-12);
}

TEST(EmbeddingFactory, Kinds) {
  EXPECT_EQ(make_embedding_provider(json{{"kind", "synthetic"}, {"dimension", 16}})->dimension(), 16u);
  EXPECT_CONVPLAN_ERROR(make_embedding_provider(json{{"kind", "nope"}}), ErrorCode::kConfigError);
}
