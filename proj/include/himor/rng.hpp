#pragma once

#include <cstdint>
#include <random>

namespace himor {

using Rng = std::mt19937_64;

// std::uniform_* distributions are implementation-defined; these helpers keep
// streams reproducible across standard libraries.
inline std::size_t uniform_index(Rng& rng, std::size_t n) { return rng() % n; }

inline double uniform_real(Rng& rng) {
  return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);  // [0,1)
}

inline double uniform_real(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_real(rng);
}

inline double normal_sample(Rng& rng) {
  // Box-Muller; consumes two draws.
  double u1 = uniform_real(rng);
  double u2 = uniform_real(rng);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace himor
