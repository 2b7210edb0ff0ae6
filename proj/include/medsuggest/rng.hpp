#pragma once

#include <cstdint>
#include <random>
#include <span>

namespace medsuggest {

/// Seeded random source. Draws are built from raw 64-bit engine output so
/// sequences are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  /// Inverse-CDF draw from nonnegative weights (need not be normalized).
  std::size_t categorical(std::span<const double> weights);

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

/// Deterministic child seed for stream `stream` of `seed` (splitmix64 mix).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace medsuggest
