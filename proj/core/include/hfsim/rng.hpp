#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

namespace hfsim {

/// Deterministic, platform-independent PRNG (splitmix64 core).
/// std::uniform_* distributions are not bit-stable across standard libraries,
/// so all randomness in the simulator flows through this generator.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform integer in [0, n). n must be > 0.
  std::size_t next_below(std::size_t n) {
    return static_cast<std::size_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  /// Uniform float in [0, 1) with 24 bits of mantissa.
  float next_uniform() { return static_cast<float>(next_u64() >> 40) * 0x1p-24f; }

  float next_uniform(float lo, float hi) { return lo + (hi - lo) * next_uniform(); }

  /// Standard normal via Box-Muller (two uniforms per draw, no cache).
  float next_gaussian();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = next_below(i);
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

/// Order-sensitive seed mixing for derived random streams.
std::uint64_t seed_mix(std::uint64_t a, std::uint64_t b);
std::uint64_t seed_mix(std::uint64_t a, std::uint64_t b, std::uint64_t c);
std::uint64_t seed_mix(std::uint64_t a, std::uint64_t b, std::uint64_t c, std::uint64_t d);

}  // namespace hfsim
