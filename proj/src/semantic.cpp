#include "convplan/semantic.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <limits>

#include "http_util.hpp"
#include "convplan/error.hpp"

namespace convplan {

namespace {

void normalize(std::vector<double>& v) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  if (norm == 0.0) throw Error(ErrorCode::kInvalidArgument, "zero embedding vector");
  for (double& x : v) x /= norm;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c) || c >= 0x80) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

SyntheticEmbeddingProvider::SyntheticEmbeddingProvider(std::size_t dimension, std::uint64_t salt)
    : dimension_(dimension), salt_(salt) {
  if (dimension == 0) throw Error(ErrorCode::kInvalidArgument, "embedding dimension must be > 0");
}

std::vector<double> SyntheticEmbeddingProvider::vector_for(const std::string& token) const {
  Rng rng(splitmix64(seed_from_string(token) ^ salt_));
  std::vector<double> v(dimension_);
  for (auto& x : v) x = rng.normal();
  normalize(v);
  return v;
}

std::vector<TokenEmbedding> SyntheticEmbeddingProvider::embed(const std::string& text) const {
  std::vector<TokenEmbedding> out;
  for (auto& tok : tokenize(text)) {
    auto v = vector_for(tok);
    out.push_back({std::move(tok), std::move(v)});
  }
  return out;
}

TableEmbeddingProvider::TableEmbeddingProvider(
    std::map<std::string, std::vector<double>> table,
    std::shared_ptr<const TokenEmbeddingProvider> fallback)
    : table_(std::move(table)), fallback_(std::move(fallback)) {
  for (auto& [tok, v] : table_) {
    if (dimension_ == 0) dimension_ = v.size();
    if (v.size() != dimension_) {
      throw Error(ErrorCode::kDimensionMismatch, "table vector for '" + tok + "' has wrong size");
    }
    normalize(v);
  }
  if (fallback_ && dimension_ != 0 && fallback_->dimension() != dimension_) {
    throw Error(ErrorCode::kDimensionMismatch, "fallback provider dimension differs from table");
  }
  if (dimension_ == 0 && fallback_) dimension_ = fallback_->dimension();
}

std::vector<TokenEmbedding> TableEmbeddingProvider::embed(const std::string& text) const {
  std::vector<TokenEmbedding> out;
  for (auto& tok : tokenize(text)) {
    auto it = table_.find(tok);
    if (it != table_.end()) {
      out.push_back({tok, it->second});
    } else if (fallback_) {
      auto fb = fallback_->embed(tok);
      for (auto& e : fb) out.push_back(std::move(e));
    } else {
      throw Error(ErrorCode::kInvalidArgument, "token '" + tok + "' not in embedding table");
    }
  }
  return out;
}

RemoteEmbeddingProvider::RemoteEmbeddingProvider(RemoteEmbeddingConfig config)
    : config_(std::move(config)) {
  if (config_.endpoint.empty()) {
    throw Error(ErrorCode::kConfigError, "remote embedding provider needs an endpoint");
  }
  if (!config_.credential_env.empty()) {
    const char* key = std::getenv(config_.credential_env.c_str());
    if (key == nullptr || *key == '\0') {
      throw Error(ErrorCode::kAuthError,
                  "environment variable " + config_.credential_env + " is not set");
    }
    api_key_ = key;
  }
}

std::vector<TokenEmbedding> RemoteEmbeddingProvider::embed(const std::string& text) const {
  const auto target = detail::parse_endpoint(config_.endpoint);
  auto client = detail::make_client(target, std::chrono::milliseconds(config_.timeout_ms));
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  const json body = {{"text", text}};
  auto res = client->Post(target.base_path.empty() ? "/" : target.base_path, headers, body.dump(),
                          "application/json");
  if (!res) throw detail::transport_error(res.error(), "embedding request");
  if (res->status != 200) throw detail::status_error(res->status, res->body, "embedding request");
  auto parsed = json::parse(res->body, nullptr, false);
  if (parsed.is_discarded() || !parsed.contains("tokens") || !parsed.contains("vectors")) {
    throw Error(ErrorCode::kProviderUnavailable, "embedding response lacks tokens/vectors");
  }
  const auto tokens = parsed["tokens"].get<std::vector<std::string>>();
  auto vectors = parsed["vectors"].get<std::vector<std::vector<double>>>();
  if (tokens.size() != vectors.size()) {
    throw Error(ErrorCode::kProviderUnavailable, "embedding response token/vector count mismatch");
  }
  std::vector<TokenEmbedding> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (vectors[i].size() != config_.dimension) {
      throw Error(ErrorCode::kDimensionMismatch,
                  "remote vector has dimension " + std::to_string(vectors[i].size()) +
                      ", expected " + std::to_string(config_.dimension));
    }
    normalize(vectors[i]);
    out.push_back({tokens[i], std::move(vectors[i])});
  }
  return out;
}

std::shared_ptr<const TokenEmbeddingProvider> make_embedding_provider(const json& config) {
  const auto kind = config.value("kind", std::string("synthetic"));
  if (kind == "synthetic") {
    return std::make_shared<SyntheticEmbeddingProvider>(config.value("dimension", std::size_t{64}),
                                                        config.value("salt", std::uint64_t{0}));
  }
  if (kind == "remote") {
    RemoteEmbeddingConfig rc;
    rc.endpoint = config.value("endpoint", std::string());
    rc.credential_env = config.value("credential_env", std::string());
    rc.dimension = config.value("dimension", std::size_t{768});
    rc.timeout_ms = config.value("timeout_ms", 30000L);
    return std::make_shared<RemoteEmbeddingProvider>(rc);
  }
  throw Error(ErrorCode::kConfigError, "unknown embedding provider kind '" + kind + "'");
}

std::string plan_text(const Plan& plan) {
  if (plan.nodes.empty()) throw Error(ErrorCode::kEmptyPlan, "plan has no nodes");
  auto nodes = plan.nodes;
  std::stable_sort(nodes.begin(), nodes.end(),
                   [](const PlanNode& a, const PlanNode& b) { return a.id < b.id; });
  std::vector<std::string> names;
  names.reserve(nodes.size());
  for (const auto& n : nodes) names.push_back(n.name);
  return join(names, "; ");
}

SemanticScore bertscore(const std::string& candidate, const std::string& reference,
                        const TokenEmbeddingProvider& provider) {
  const auto cand = provider.embed(candidate);
  const auto ref = provider.embed(reference);
  if (cand.empty() || ref.empty()) {
    throw Error(ErrorCode::kEmptyText, "bertscore needs at least one token on each side");
  }
  const std::size_t dim = cand.front().vector.size();
  for (const auto* side : {&cand, &ref}) {
    for (const auto& e : *side) {
      if (e.vector.size() != dim) {
        throw Error(ErrorCode::kDimensionMismatch, "embedding dimensions differ");
      }
    }
  }
  // sim[i][j] = cos(candidate_i, reference_j); vectors are unit norm.
  std::vector<double> best_for_ref(ref.size(), -std::numeric_limits<double>::infinity());
  double precision = 0.0;
  for (const auto& c : cand) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < ref.size(); ++j) {
      const double sim = dot(c.vector, ref[j].vector);
      best = std::max(best, sim);
      best_for_ref[j] = std::max(best_for_ref[j], sim);
    }
    precision += best;
  }
  precision /= static_cast<double>(cand.size());
  double recall = 0.0;
  for (double b : best_for_ref) recall += b;
  recall /= static_cast<double>(ref.size());

  SemanticScore s;
  s.precision = precision;
  s.recall = recall;
  // Cosines can be negative, so P + R can be too; only the zero sum needs a guard.
  const double sum = precision + recall;
  s.f1 = sum != 0.0 ? 2.0 * precision * recall / sum : 0.0;
  return s;
}

double semantic_distance(const Plan& a, const Plan& b, const TokenEmbeddingProvider& provider) {
  return bertscore(plan_text(a), plan_text(b), provider).distance();
}

}  // namespace convplan
