#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace rageval {

using Json = nlohmann::ordered_json;

std::string sha256_hex(std::string_view data);
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// Derives an independent stream seed from a base seed and a string key.
std::uint64_t derive_seed(std::uint64_t base, std::string_view key);

/// Seeded generator whose outputs are fixed by the standard (mt19937_64), with
/// our own bounded-integer mapping so sampling is identical across standard
/// library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);
  /// Uniform double in [0, 1).
  double unit();
  /// Standard normal via Box-Muller.
  double normal();

  /// Partial Fisher-Yates: returns `count` distinct indices from [0, n) in
  /// draw order.
  std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count);

 private:
  std::mt19937_64 engine_;
};

std::string read_file(const std::filesystem::path& path);
/// Writes through a temporary file and renames into place.
void write_file(const std::filesystem::path& path, std::string_view contents);

std::vector<Json> read_jsonl(const std::filesystem::path& path);
std::string to_jsonl(const std::vector<Json>& records);
void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& records);

/// Runs fn(i) for i in [0, n) on at most `workers` threads. Exceptions from
/// any task are rethrown (the lowest failing index wins).
void parallel_for(std::size_t n, std::size_t workers,
                  const std::function<void(std::size_t)>& fn);

}  // namespace rageval
