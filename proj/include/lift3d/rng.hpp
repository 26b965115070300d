#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace lift3d {

// Deterministic random source. All distribution logic lives here (rejection
// sampling, polar normals, partial Fisher-Yates) instead of std::*_distribution,
// whose output is implementation-defined; this keeps seeded runs reproducible
// across standard libraries and lets checkpoints serialize the exact state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Unbiased integer in [0, n) via bitmask rejection.
  std::uint64_t uniform_below(std::uint64_t n);

  // Uniform in [0, 1) with 53 random bits.
  double uniform01();

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Standard normal (Marsaglia polar, one cached spare).
  double normal();

  // k distinct indices drawn uniformly from {0, ..., n-1}; order is the
  // draw order of a partial Fisher-Yates shuffle.
  std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

  std::string serialize() const;
  static Rng deserialize(const std::string& text);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace lift3d
