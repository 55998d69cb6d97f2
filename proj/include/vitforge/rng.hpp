#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace vitforge {

// splitmix64 step; used to expand a 64-bit seed into generator state.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// xoshiro256** seeded through splitmix64. This is the pinned generator for
// every seeded decision in the library (shuffles, weight init, synthetic
// data), so identical seeds give identical streams on any platform.
class Xoshiro256ss {
 public:
  explicit Xoshiro256ss(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& word : state_) word = splitmix64_next(sm);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform double in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform double in (0, 1]; safe as a log() argument.
  double next_double_open() {
    return static_cast<double>((next() >> 11) + 1) * 0x1.0p-53;
  }

  // Uniform integer in [0, n). Plain modulo; the bias is irrelevant for
  // shuffling and keeping the mapping trivial makes the stream auditable.
  std::uint64_t next_below(std::uint64_t n) { return next() % n; }

  // Standard normal via Box-Muller. Draws a fresh pair per call so the
  // consumed stream length per sample is fixed.
  double next_normal() {
    const double u1 = next_double_open();
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Normal(0, stddev) truncated to |z| <= bound_sigmas by rejection.
  float next_trunc_normal(float stddev, float bound_sigmas = 2.0f) {
    for (;;) {
      const double z = next_normal();
      if (std::abs(z) <= static_cast<double>(bound_sigmas)) {
        return static_cast<float>(z * static_cast<double>(stddev));
      }
    }
  }

  std::array<std::uint64_t, 4> state() const { return state_; }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::array<std::uint64_t, 4> state_{};
};

// In-place Fisher-Yates shuffle driven by the pinned generator.
template <class T>
void fisher_yates(std::vector<T>& values, Xoshiro256ss& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.next_below(i));
    std::swap(values[i - 1], values[j]);
  }
}

}  // namespace vitforge
