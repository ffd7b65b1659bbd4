#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace alam {

// Seed mixing (SplitMix64). Also the documented seed-splitting function:
// every module stream is seeded as
//   stream_seed = splitmix(splitmix(global_seed ^ fnv1a(name)) + index)
// so runs are reproducible and streams never alias across modules.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline uint64_t fnv1a(std::string_view s) {
  uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

// xoshiro256++ with hand-rolled uniform/normal so that every draw is
// bit-reproducible across platforms and compilers (std distributions are not).
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) { reseed(seed); }

  void reseed(uint64_t seed) {
    uint64_t x = seed;
    for (auto& w : s_) {
      x = splitmix64(x);
      w = x;
    }
    has_spare_ = false;
    spare_ = 0.0;
  }

  uint64_t next_u64() {
    const uint64_t result = rotl_(s_[0] + s_[3], 23) + s_[0];
    const uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl_(s_[3], 45);
    return result;
  }

  // Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n), unbiased via rejection.
  uint64_t uniform_int(uint64_t n) {
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  // Inclusive integer range [lo, hi].
  int64_t uniform_range(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(uniform_int(static_cast<uint64_t>(hi - lo + 1)));
  }

  // Standard normal, Box-Muller with cached spare.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Fisher-Yates.
  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      const size_t j = uniform_int(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // Serialization for checkpointed streams.
  std::array<uint64_t, 4> state() const { return s_; }
  bool has_spare() const { return has_spare_; }
  double spare() const { return spare_; }
  void restore(const std::array<uint64_t, 4>& s, bool has_spare, double spare) {
    s_ = s;
    has_spare_ = has_spare;
    spare_ = spare;
  }

 private:
  static uint64_t rotl_(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::array<uint64_t, 4> s_{};
  bool has_spare_{false};
  double spare_{0.0};
};

// Named sub-stream derivation; see comment on splitmix64.
inline uint64_t stream_seed(uint64_t global_seed, std::string_view name, uint64_t index = 0) {
  return splitmix64(splitmix64(global_seed ^ fnv1a(name)) + index);
}

inline Rng make_stream(uint64_t global_seed, std::string_view name, uint64_t index = 0) {
  return Rng(stream_seed(global_seed, name, index));
}

}  // namespace alam
