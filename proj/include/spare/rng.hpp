#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace spare {

// SplitMix64 finalizer. Used both as the stream generator and as a stateless
// counter hash so that weight initialization is independent of draw order.
inline uint64_t mix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline uint64_t hash_combine(uint64_t seed, uint64_t value) {
  return mix64(seed ^ (value + 0x9E3779B97F4A7C15ULL + (seed << 6) + (seed >> 2)));
}

inline uint64_t hash_str(std::string_view s) {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) h = hash_combine(h, static_cast<uint64_t>(static_cast<unsigned char>(c)));
  return h;
}

// Derives an independent child seed from a base seed and a tag. Every
// randomized component takes its own derived seed, which keeps results
// reproducible regardless of evaluation order or worker count.
inline uint64_t derive_seed(uint64_t base, std::string_view tag, uint64_t index = 0) {
  return hash_combine(hash_combine(base, hash_str(tag)), index);
}

inline double unit_double(uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Deterministic stream RNG (SplitMix64). Not cryptographic; identical output
// on every platform for a given seed.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return unit_double(next_u64()); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  uint64_t integer(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  // Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_value_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * std::numbers::pi * u2;
    spare_value_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::vector<int> permutation(int n) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    for (int i = n - 1; i > 0; --i) {
      int j = static_cast<int>(integer(static_cast<uint64_t>(i) + 1));
      std::swap(p[i], p[j]);
    }
    return p;
  }

 private:
  uint64_t state_;
  bool have_spare_ = false;
  double spare_value_ = 0.0;
};

// Stateless standard normal from a counter tuple; used for network weight
// initialization so that a weight's value depends only on its coordinates.
inline double counter_normal(uint64_t seed, uint64_t a, uint64_t b, uint64_t c) {
  uint64_t h = hash_combine(hash_combine(hash_combine(seed, a), b), c);
  double u1 = unit_double(mix64(h));
  double u2 = unit_double(mix64(h ^ 0xD1B54A32D192ED03ULL));
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace spare
