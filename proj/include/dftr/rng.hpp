// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>

namespace dftr {

/// SplitMix64 step; used to expand a 64-bit seed into generator state and to
/// derive per-item seeds.
std::uint64_t splitmix64(std::uint64_t& state);

/// Mixes two 64-bit values into a derived seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt);

/// xoshiro256** generator. The state is four 64-bit words seeded by SplitMix64,
/// so the same seed yields the same stream on any platform.
class Rng {
 public:
  using State = std::array<std::uint64_t, 4>;

  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t next_u64();
  /// Uniform double in [0, 1) built from the top 53 bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal via Box-Muller (one value per call, no caching).
  double normal();
  /// Normal(0, std) redrawn until it falls inside ±2·std.
  double truncated_normal(double std);
  bool bernoulli(double p);

  const State& state() const { return state_; }
  void set_state(const State& s) { state_ = s; }

 private:
  State state_{};
};

}  // namespace dftr
