#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace anonpads {

/// splitmix64 finalizer: a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
  return mix64(h ^ mix64(v));
}

/// Small deterministic generator (splitmix64 stream). Every draw helper is
/// implemented here rather than via <random> distributions so sequences are
/// identical across standard libraries.
class Rng {
 public:
  using result_type = std::uint64_t;

  constexpr explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }

  constexpr result_type operator()() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi). Returns lo when lo == hi.
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] (inclusive), via Lemire's multiply-shift with rejection.
  std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
    const std::uint64_t range = hi - lo + 1;
    if (range == 0) return (*this)();  // full 64-bit range
    const std::uint64_t limit = (~range + 1) % range;
    for (;;) {
      __uint128_t m = static_cast<__uint128_t>((*this)()) * range;
      if (static_cast<std::uint64_t>(m) >= limit) return lo + static_cast<std::uint64_t>(m >> 64);
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (one value per call).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double lognormal(double mu, double sigma) { return std::exp(mu + sigma * normal()); }

 private:
  std::uint64_t state_;
};

/// What a per-entity stream is used for; part of the stream key.
enum class RngPurpose : std::uint64_t {
  init = 1,
  mobility = 2,
  placement = 3,
};

/// Stream keyed by (seed, entity, step, purpose). Independent of which LP
/// hosts the entity, so results do not depend on the partitioning.
inline Rng entity_rng(std::uint64_t global_seed, std::uint32_t entity_id, std::uint64_t step,
                      RngPurpose purpose) {
  std::uint64_t h = mix64(global_seed);
  h = hash_combine(h, entity_id);
  h = hash_combine(h, step);
  h = hash_combine(h, static_cast<std::uint64_t>(purpose));
  return Rng(h);
}

}  // namespace anonpads
