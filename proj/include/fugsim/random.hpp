#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

// Deterministic random utilities. Simulation code draws through keyed
// counter streams (one hash per draw site), so runs are reproducible
// bit-for-bit regardless of evaluation order and traces generated with
// different process counts stay coupled draw-by-draw.

namespace fugsim::rng {

constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// splitmix64 sequence generator; satisfies uniform_random_bit_generator.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  result_type operator()() { return mix64(state_++); }
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

 private:
  std::uint64_t state_;
};

inline double to_unit(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

template <typename Urbg>
double uniform01(Urbg& gen) {
  return to_unit(static_cast<std::uint64_t>(gen()));
}

// Keyed one-shot draws. (a, b, c) identify the draw site, e.g.
// (tag, device, slot).
inline std::uint64_t keyed_bits(std::uint64_t seed, std::uint64_t a,
                                std::uint64_t b, std::uint64_t c) {
  std::uint64_t k = seed;
  k = mix64(k ^ mix64(a));
  k = mix64(k ^ mix64(b));
  k = mix64(k ^ mix64(c));
  return k;
}

inline double keyed_uniform(std::uint64_t seed, std::uint64_t a,
                            std::uint64_t b, std::uint64_t c) {
  return to_unit(keyed_bits(seed, a, b, c));
}

// Exponential(1) by inversion; finite for u in [0,1).
inline double exponential_from_uniform(double u) { return -std::log1p(-u); }

// Poisson count by CDF inversion from a single uniform. Monotone in mean
// for fixed u, which the coupled-trace comparisons rely on.
inline int poisson_from_uniform(double mean, double u) {
  if (mean <= 0.0) return 0;
  double p = std::exp(-mean);
  double cdf = p;
  int k = 0;
  while (u >= cdf && k < 1000000) {
    ++k;
    p *= mean / k;
    cdf += p;
    if (p < 1e-300) break;
  }
  return k;
}

}  // namespace fugsim::rng
