#pragma once

#include <array>
#include <cstdint>
#include <cmath>

namespace sar {

// xoshiro256** by Blackman & Vigna (public domain reference constants),
// seeded through splitmix64. All draws below map bits to values with fixed
// arithmetic only, so streams are identical across platforms and compilers.
class Rng {
 public:
  explicit Rng(uint64_t seed) { reseed(seed); }

  void reseed(uint64_t seed) {
    uint64_t x = seed;
    for (auto& s : state_) {
      // splitmix64
      x += 0x9E3779B97F4A7C15ull;
      uint64_t z = x;
      z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
      z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
      s = z ^ (z >> 31);
    }
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // uniform in [0, 1), 53-bit resolution
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // uniform in [lo, hi)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n), n > 0; rejection-free multiply-shift would bias
  // only beyond 2^64/n, negligible here, but we reject to stay exact.
  uint64_t uniform_int(uint64_t n) {
    const uint64_t limit = ~uint64_t(0) - (~uint64_t(0) % n);
    uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  // Fisher-Yates over indices [0, n)
  template <class T>
  void shuffle(T* a, size_t n) {
    for (size_t i = n; i > 1; --i) {
      size_t j = size_t(uniform_int(i));
      std::swap(a[i - 1], a[j]);
    }
  }

  std::array<uint64_t, 4> state() const { return state_; }
  void set_state(const std::array<uint64_t, 4>& s) { state_ = s; }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::array<uint64_t, 4> state_{};
};

// Derives an independent stream for a named purpose from one user seed.
inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace sar
