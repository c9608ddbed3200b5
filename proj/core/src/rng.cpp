#include "hfsim/rng.hpp"

#include <cmath>

namespace hfsim {

float Rng::next_gaussian() {
  // u1 must be > 0 for the log.
  float u1 = 0.0f;
  do {
    u1 = next_uniform();
  } while (u1 <= 0.0f);
  float u2 = next_uniform();
  double r = std::sqrt(-2.0 * std::log(static_cast<double>(u1)));
  double theta = 2.0 * 3.14159265358979323846 * static_cast<double>(u2);
  return static_cast<float>(r * std::cos(theta));
}

std::uint64_t seed_mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t seed_mix(std::uint64_t a, std::uint64_t b, std::uint64_t c) { return seed_mix(seed_mix(a, b), c); }

std::uint64_t seed_mix(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d) {
  return seed_mix(seed_mix(a, b, c), d);
}

}  // namespace hfsim
