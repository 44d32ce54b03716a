// Copyright 2026 The tommer Authors
// SPDX-License-Identifier: Apache-2.0

// Portable seeded randomness. The standard distributions are implementation
// defined, so everything that must reproduce across toolchains goes through
// these helpers on top of mt19937_64 (whose output sequence is fixed).

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <utility>
#include <vector>

namespace tommer::detail {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::initializer_list<std::uint32_t> seeds) {
    std::seed_seq seq(seeds);
    engine_.seed(seq);
  }

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n), n > 0, without modulo bias.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

/// Splits a 64-bit seed into the two words fed to seed_seq.
inline Rng derived_rng(std::uint64_t seed, std::uint32_t stream) {
  return Rng{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
}

}  // namespace tommer::detail
