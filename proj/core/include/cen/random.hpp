// SPDX-License-Identifier: Apache-2.0
//
// Counter-based 64-bit generator used for every random draw in the library
// (data generation, initialisation, shuffling, random exchange).
//
//   output_i = mix64(key + i · 0x9E3779B97F4A7C15),  i = 1, 2, ...
//   mix64(z):  z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//              z ^= z >> 27; z *= 0x94D049BB133111EB;
//              z ^= z >> 31
//
// This is SplitMix64 written as a function of (key, counter), so the k-th
// draw of any stream can be recomputed independently. Sub-streams use
// derive(key, tag) = mix64(key ^ mix64(tag + 0xD1B54A32D192ED03)).
//
// uniform() takes the top 53 bits: (u64 >> 11) · 2^-53, in [0, 1).
// normal() is Box-Muller on two consecutive uniforms u1, u2:
// sqrt(-2 ln(1 - u1)) · cos(2π u2).
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace cen {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t derive(std::uint64_t key, std::uint64_t tag) {
  return mix64(key ^ mix64(tag + 0xD1B54A32D192ED03ULL));
}

class CounterRng {
 public:
  constexpr explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0)
      : key_(key), counter_(counter) {}

  constexpr std::uint64_t next_u64() { return mix64(key_ + (++counter_) * kGolden); }

  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer in [0, n). Modulo reduction; the bias is below 2^-40 for the
  /// sizes used here.
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(1.0 - u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  constexpr std::uint64_t key() const { return key_; }
  constexpr std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace cen
