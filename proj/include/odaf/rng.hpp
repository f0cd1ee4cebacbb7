#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace odaf {

/// SplitMix64 finalizer. Used to derive independent sub-streams from one seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Seeded random source. Every stochastic routine takes one of these explicitly
/// so that callers own reproducibility.
///
/// Draws are built from raw 64-bit engine output instead of the standard
/// distributions, whose algorithms differ between standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform index in [0, n). n must be positive.
  std::size_t index(std::size_t n);

  bool bernoulli(double p) { return uniform() < p; }

  /// Samples an index proportionally to non-negative weights summing to ~1.
  int categorical(std::span<const double> probs);

 private:
  std::mt19937_64 engine_;
};

}  // namespace odaf
