#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace swirl {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for stream `index` of a run seeded with `seed`, independent of scheduling.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  return mix_seed(mix_seed(seed) ^ mix_seed(index + 0x632be59bd9b4e019ULL));
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)) % n;
}

/// Inverse-CDF draw from an unnormalized-safe probability vector.
inline std::size_t sample_categorical(Rng& rng, std::span<const double> probs) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // Rounding left u above the total; return the last positive entry.
  for (std::size_t i = probs.size(); i-- > 0;) {
    if (probs[i] > 0.0) return i;
  }
  return probs.size() - 1;
}

/// Standard normal via Box-Muller on uniform01, portable across standard libraries.
inline double standard_normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace swirl
