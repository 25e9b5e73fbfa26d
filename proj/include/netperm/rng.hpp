#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace netperm {

/// SplitMix64 finalizer: a bijective 64-bit mix with full avalanche.
inline constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derive a child key from a parent key and a word. Chaining this gives the
/// counter-based seed streams used everywhere: every draw/replicate/grid
/// point owns a stream keyed by its index, so results do not depend on
/// thread count or evaluation order.
inline constexpr std::uint64_t derive_key(std::uint64_t parent, std::uint64_t word) {
  return mix64(parent ^ (word + 0x9e3779b97f4a7c15ULL + (parent << 6) + (parent >> 2)));
}

inline constexpr std::uint64_t derive_key(std::initializer_list<std::uint64_t> words) {
  std::uint64_t k = 0x243f6a8885a308d3ULL;  // arbitrary nonzero start
  for (std::uint64_t w : words) k = derive_key(k, w);
  return k;
}

/// Deterministic PRNG: the SplitMix64 sequence. Small state, cheap to seed,
/// identical output on every platform (no std::*_distribution involved).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  static Rng keyed(std::initializer_list<std::uint64_t> words) {
    return Rng(derive_key(words));
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t x = state_;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  /// Uniform deviate in the open interval (0,1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * uniform(); }

  /// Unbiased integer in [0, bound) by masked rejection.
  std::uint64_t below(std::uint64_t bound) {
    if (bound <= 1) return 0;
    std::uint64_t mask = ~std::uint64_t{0} >> __builtin_clzll((bound - 1) | 1);
    for (;;) {
      std::uint64_t v = next_u64() & mask;
      if (v < bound) return v;
    }
  }

  /// Standard normal via Box-Muller (cosine branch).
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Poisson by Knuth's product-of-uniforms, split into chunks so the
  /// exp(-mean) threshold never underflows for large means.
  long poisson(double mean) {
    long total = 0;
    while (mean > 60.0) {
      total += poisson_small(60.0);
      mean -= 60.0;
    }
    return total + poisson_small(mean);
  }

 private:
  long poisson_small(double mean) {
    if (mean <= 0.0) return 0;
    const double limit = std::exp(-mean);
    long k = 0;
    double prod = uniform();
    while (prod > limit) {
      ++k;
      prod *= uniform();
    }
    return k;
  }

  std::uint64_t state_;
};

}  // namespace netperm
