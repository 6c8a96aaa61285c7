#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace metassm {

// Deterministic RNG. mt19937_64 is fully specified by the standard; the
// variate mappings are our own so streams are identical across platforms
// and standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  double uniform() {  // [0,1)
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {  // Box-Muller, cosine branch only
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // [0, n); modulo bias is negligible for n << 2^64
  std::size_t uniform_index(std::size_t n) { return n ? next_u64() % n : 0; }

  // Stable sub-seed for parallel work items: one Rng per item keeps results
  // independent of scheduling.
  static uint64_t derive(uint64_t seed, uint64_t salt) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ull * (salt + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace metassm
