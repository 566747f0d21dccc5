// Copyright Contributors to the gaussworld Project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>

#include "gaussworld/core/common.hpp"

namespace gw {

// Seeded counter-free PRNG with hand-rolled distributions. The standard
// <random> distributions are implementation-defined, so every stochastic
// path in the library goes through this type to keep datasets, training
// trajectories, and samplers bit-reproducible.
class Rng {
 public:
  explicit Rng(u64 seed) {
    // splitmix64 expansion of the seed into xoshiro256** state
    u64 x = seed;
    for (auto& si : s_) si = splitmix(x);
  }

  /// Deterministically derive an independent stream (e.g. per clip, per
  /// parameter, per training step).
  Rng child(u64 tag) const {
    u64 x = s_[0] ^ (0x9e3779b97f4a7c15ULL * (tag + 1));
    return Rng(x ^ s_[2]);
  }

  u64 next_u64() {
    const u64 result = rotl(s_[1] * 5, 7) * 9;
    const u64 t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  i64 below(i64 n) {
    GW_REQUIRE(n > 0, "Rng::below needs positive bound");
    return static_cast<i64>(next_u64() % static_cast<u64>(n));
  }

  /// Uniform in [lo, hi].
  i64 range(i64 lo, i64 hi) { return lo + below(hi - lo + 1); }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (both values consumed per pair of draws).
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    while (u1 <= 1e-300) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

 private:
  static u64 splitmix(u64& x) {
    x += 0x9e3779b97f4a7c15ULL;
    u64 z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  static u64 rotl(u64 v, int k) { return (v << k) | (v >> (64 - k)); }

  u64 s_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace gw
