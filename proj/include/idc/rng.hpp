#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace idc {

// SplitMix64 generator. Every random artifact in the project is derived
// from a named stream so outputs are a pure function of the seed and do
// not depend on worker count or call interleaving.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int64_t range(int64_t n) { return int64_t(next_u64() % uint64_t(n)); }

  // [lo, hi] inclusive
  int64_t range(int64_t lo, int64_t hi) { return lo + range(hi - lo + 1); }

  bool bernoulli(double p) { return uniform() < p; }

  double normal(double mean = 0.0, double stddev = 1.0) {
    // Box-Muller; the second value is discarded to keep call counts flat.
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

 private:
  uint64_t state_;
};

inline uint64_t hash_mix(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ull + b * 0xff51afd7ed558ccdull;
  z = (z ^ (z >> 33)) * 0xc4ceb9fe1a85ec53ull;
  return z ^ (z >> 33);
}

// FNV-1a over the tag text.
inline uint64_t hash_str(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= uint64_t(uint8_t(c));
    h *= 0x100000001b3ull;
  }
  return h;
}

// Independent child stream for (seed, tag, a, b).
inline Rng rng_stream(uint64_t seed, std::string_view tag, uint64_t a = 0,
                      uint64_t b = 0) {
  return Rng(hash_mix(hash_mix(seed, hash_str(tag)), hash_mix(a, b)));
}

}  // namespace idc
