#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace convplan {

using json = nlohmann::json;

// Hashing ------------------------------------------------------------------

std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

/// Stateless 64-bit mixer; used to derive per-item seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Folds a string into a seed through SHA-256 (first 8 bytes).
std::uint64_t seed_from_string(std::string_view s);

/// Portable RNG: the std distributions are implementation-defined, so bounded
/// ints and normals are derived here directly from mt19937_64 output.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, bound). bound must be > 0.
  std::uint64_t uniform(std::uint64_t bound);
  /// Uniform in [0, 1).
  double uniform01();
  double normal();

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[uniform(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// Strings ------------------------------------------------------------------

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
/// Lowercase and collapse runs of whitespace to a single space, trimmed.
std::string normalize_label(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Returns the first substring that parses as a JSON object, scanning left to
/// right. Tolerates surrounding prose and markdown code fences.
std::optional<json> extract_first_json_object(std::string_view text);

// Files --------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path);
/// Writes via a temp file + rename so readers never see partial content.
void write_file(const std::filesystem::path& path, std::string_view content);

std::vector<json> read_jsonl(const std::filesystem::path& path);
std::string to_jsonl(const std::vector<json>& rows);
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows);

}  // namespace convplan
