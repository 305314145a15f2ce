#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

// Seeded, allocation-free randomness with bit-stable output on every platform.
// std::mt19937 would do, but std:: distributions are not bit-stable across
// standard libraries and this kit freezes expected values into tests.

namespace usamkit {

inline uint64_t splitmix64_next(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t hash64(uint64_t x) {
  uint64_t s = x;
  return splitmix64_next(s);
}

inline uint64_t mix64(uint64_t a, uint64_t b) {
  return hash64(a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2)));
}

template <typename... Rest>
uint64_t mix64(uint64_t a, uint64_t b, Rest... rest) {
  return mix64(mix64(a, b), uint64_t(rest)...);
}

// Top 53 bits -> [0, 1).
inline double u01(uint64_t bits) { return double(bits >> 11) * 0x1.0p-53; }

inline double hash01(uint64_t x) { return u01(hash64(x)); }

inline uint64_t fnv1a64(std::span<const uint8_t> bytes) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next() { return splitmix64_next(state_); }

  double uniform() { return u01(next()); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive bounds. Modulo bias is negligible for the small ranges used here.
  int uniform_int(int lo, int hi) {
    return lo + int(next() % uint64_t(hi - lo + 1));
  }

  // Box-Muller without caching so every call consumes exactly two draws.
  double gaussian() {
    double u1 = u01(next());
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    double u2 = u01(next());
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double gaussian(double mean, double sigma) { return mean + sigma * gaussian(); }

 private:
  uint64_t state_;
};

}  // namespace usamkit
