// Copyright 2026 GeoQuery Contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Portable random draws. The <random> distributions are implementation
// defined, so everything seeded in this project goes through these helpers
// on top of std::mt19937_64 (whose output sequence is fixed by the standard).

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace geoquery::rnd {

using Engine = std::mt19937_64;

inline Engine make_engine(std::uint64_t seed, std::uint64_t stream = 0) {
  // splitmix64 so that nearby seeds/streams give unrelated states
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return Engine(z ^ (z >> 31));
}

/// Uniform integer in [0, bound). bound must be > 0.
inline std::uint64_t below(Engine& rng, std::uint64_t bound) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

/// Uniform double in [0, 1).
inline double unit(Engine& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Engine& rng, double lo, double hi) { return lo + (hi - lo) * unit(rng); }

/// Standard normal via Box-Muller (one value per call).
inline double normal(Engine& rng) {
  double u1;
  do {
    u1 = unit(rng);
  } while (u1 <= 0.0);
  const double u2 = unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace geoquery::rnd
