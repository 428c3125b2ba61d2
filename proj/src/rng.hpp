#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "error.hpp"

namespace dcwp {

// All stochastic code draws from an explicitly passed engine. Variate
// generation is pinned here (not std::*_distribution) so that a given seed
// reproduces bit-identical streams across standard library versions.
using Rng = std::mt19937_64;

/// Uniform in [0, 1).
inline double uniform01(Rng& g) { return static_cast<double>(g() >> 11) * 0x1.0p-53; }

/// Uniform in (0, 1), both endpoints excluded.
inline double uniform01_open(Rng& g) {
  return (static_cast<double>(g() >> 11) + 0.5) * 0x1.0p-53;
}

inline double uniform(Rng& g, double lo, double hi) { return lo + (hi - lo) * uniform01(g); }

/// Standard normal via Box-Muller (no cached spare, so the stream position
/// is a pure function of the number of calls).
inline double normal01(Rng& g) {
  double u1 = uniform01_open(g);
  double u2 = uniform01(g);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

/// Standard logistic noise, log(u) - log(1-u).
inline double logistic(Rng& g) {
  double u = uniform01_open(g);
  return std::log(u) - std::log1p(-u);
}

/// Uniform integer in [0, n).
inline std::uint64_t uniform_index(Rng& g, std::uint64_t n) {
  require(n > 0, ErrorCode::invalid_argument, "uniform_index: empty range");
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(g()) * n) >> 64);
}

inline bool bernoulli(Rng& g, double p) { return uniform01(g) < p; }

/// Derives an independent child seed; used to give each pipeline stage its
/// own stream so stage order changes never perturb other stages.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 over (seed ^ odd-scrambled stream)
  std::uint64_t z = seed ^ (stream * 0x9e3779b97f4a7c15ULL + 0xbf58476d1ce4e5b9ULL);
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace dcwp
