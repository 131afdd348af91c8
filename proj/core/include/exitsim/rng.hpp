#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace exitsim {

// Seeded generator with distribution code written out here: the standard
// distributions are implementation-defined, and runs must be byte-identical
// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [lo, hi], inclusive. Rejection sampling, no modulo bias.
  std::uint64_t uniform(std::uint64_t lo, std::uint64_t hi);
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(uniform(0, n - 1)); }

  /// Uniform double in [0, 1) with 53 bits of precision.
  double unit();
  bool bernoulli(double p) { return unit() < p; }

  /// Picks an index according to `weights` (need not be normalised).
  std::size_t weighted(const std::vector<double>& weights);

  /// Derives an independent child stream; used to give subsystems their own
  /// sequence so adding draws in one does not shift another.
  Rng fork(std::uint64_t salt);

 private:
  std::mt19937_64 engine_;
};

}  // namespace exitsim
