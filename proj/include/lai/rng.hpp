#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace lai {

// splitmix64; used to derive independent substreams from (seed, salt, index).
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t salt,
                                   std::uint64_t index) {
  return mix64(mix64(seed ^ mix64(salt)) + index);
}

// Deterministic generator with hand-rolled distributions. The standard
// distribution adaptors are implementation-defined, so every draw here goes
// through fixed arithmetic to keep artifacts bit-reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed ? seed : 0x1234abcd9876ull) {
    // warm up past low-entropy seeds
    next();
    next();
  }

  std::uint64_t next() {
    // xorshift64* core
    std::uint64_t x = state_;
    x ^= x >> 12;
    x ^= x << 25;
    x ^= x >> 27;
    state_ = x;
    return x * 0x2545f4914f6cdd1dull;
  }

  // uniform in [0, 1)
  double uniform() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n); n > 0
  std::uint64_t below(std::uint64_t n) {
    // rejection to avoid modulo bias
    const std::uint64_t limit = ~0ull - (~0ull % n);
    std::uint64_t v = next();
    while (v >= limit) v = next();
    return v % n;
  }

  // standard normal via Box-Muller (no cached spare, fixed draw order)
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double std) { return mean + std * normal(); }

  // Fisher-Yates, fixed order
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace lai
