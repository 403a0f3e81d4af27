#ifndef CLOZE_RNG_HPP_
#define CLOZE_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <random>

namespace cloze {

// Distribution helpers on top of the standardized mt19937_64 stream. The
// std:: distribution objects are implementation-defined, so seeded runs
// would not reproduce across standard libraries; these do.

inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Box-Muller; consumes two draws.
inline double normal01(std::mt19937_64& rng) {
  const double u1 = 1.0 - uniform01(rng);  // (0,1]
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace cloze

#endif  // CLOZE_RNG_HPP_
