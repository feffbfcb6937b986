#pragma once

// Semantic distance between plans: greedy token-embedding matching F1 over
// the concatenated node names, without idf weighting or baseline rescaling.

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "convplan/plan.hpp"

namespace convplan {

struct TokenEmbedding {
  std::string token;
  std::vector<double> vector;
};

/// embed() must return unit-norm vectors of dimension() entries.
class TokenEmbeddingProvider {
 public:
  virtual ~TokenEmbeddingProvider() = default;
  virtual std::vector<TokenEmbedding> embed(const std::string& text) const = 0;
  virtual std::size_t dimension() const = 0;
};

/// Lowercased alphanumeric runs; punctuation and whitespace are separators.
std::vector<std::string> tokenize(std::string_view text);

/// Token -> hash-seeded Gaussian direction, normalized. Deterministic across
/// platforms; distinct tokens are nearly orthogonal for large dimensions.
class SyntheticEmbeddingProvider final : public TokenEmbeddingProvider {
 public:
  explicit SyntheticEmbeddingProvider(std::size_t dimension = 64, std::uint64_t salt = 0);

  std::vector<TokenEmbedding> embed(const std::string& text) const override;
  std::size_t dimension() const override { return dimension_; }
  std::vector<double> vector_for(const std::string& token) const;

 private:
  std::size_t dimension_;
  std::uint64_t salt_;
};

/// Fixed lookup table; vectors are normalized on construction. Tokens missing
/// from the table fall back to `fallback` when given, otherwise throw.
class TableEmbeddingProvider final : public TokenEmbeddingProvider {
 public:
  explicit TableEmbeddingProvider(std::map<std::string, std::vector<double>> table,
                                  std::shared_ptr<const TokenEmbeddingProvider> fallback = nullptr);

  std::vector<TokenEmbedding> embed(const std::string& text) const override;
  std::size_t dimension() const override { return dimension_; }

 private:
  std::map<std::string, std::vector<double>> table_;
  std::shared_ptr<const TokenEmbeddingProvider> fallback_;
  std::size_t dimension_ = 0;
};

struct RemoteEmbeddingConfig {
  std::string endpoint;
  std::string credential_env;
  std::size_t dimension = 768;
  long timeout_ms = 30000;
};

/// POSTs {"text": ...} to the endpoint and expects
/// {"tokens": [...], "vectors": [[...], ...]}; vectors are renormalized.
class RemoteEmbeddingProvider final : public TokenEmbeddingProvider {
 public:
  explicit RemoteEmbeddingProvider(RemoteEmbeddingConfig config);

  std::vector<TokenEmbedding> embed(const std::string& text) const override;
  std::size_t dimension() const override { return config_.dimension; }

 private:
  RemoteEmbeddingConfig config_;
  std::string api_key_;
};

/// {kind: synthetic | remote, dimension, endpoint, credential_env}
std::shared_ptr<const TokenEmbeddingProvider> make_embedding_provider(const json& config);

struct SemanticScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double distance() const { return 1.0 - f1; }
};

/// Node names in ascending id order joined by "; ". Throws EmptyPlan.
std::string plan_text(const Plan& plan);

SemanticScore bertscore(const std::string& candidate, const std::string& reference,
                        const TokenEmbeddingProvider& provider);

/// 1 - F1 with `a` as candidate and `b` as reference.
double semantic_distance(const Plan& a, const Plan& b, const TokenEmbeddingProvider& provider);

}  // namespace convplan
