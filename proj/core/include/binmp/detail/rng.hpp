#pragma once

#include <cmath>
#include <cstdint>

// Small counter-based RNG utilities. Every stochastic choice in the library
// draws from a stream keyed by (seed, purpose, index...) so results are
// reproducible regardless of evaluation order or thread count.

namespace binmp::detail {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Stable key mixing for independent substreams.
inline uint64_t mix_stream(uint64_t seed, uint64_t a, uint64_t b = 0,
                           uint64_t c = 0) {
  uint64_t h = splitmix64(seed ^ 0x6a09e667f3bcc909ull);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  h = splitmix64(h ^ c);
  return h;
}

// Uniform double in [0, 1) from one 64-bit word.
inline double u01(uint64_t w) {
  return static_cast<double>(w >> 11) * 0x1.0p-53;
}

// Standard-normal double from two 64-bit words (Box-Muller; the log
// argument is 1 - u01 to stay inside (0, 1]).
inline double n01(uint64_t w1, uint64_t w2) {
  const double r = std::sqrt(-2.0 * std::log(1.0 - u01(w1)));
  return r * std::cos(6.283185307179586476925286766559 * u01(w2));
}

}  // namespace binmp::detail
