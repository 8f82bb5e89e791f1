// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>

namespace mixmt {

// Counter-based generator state. The stream is a pure function of
// (seed, counter): value i of the stream is random_bits(seed, counter + i).
struct RngState {
  std::uint64_t seed = 0;
  std::uint64_t counter = 0;

  friend bool operator==(const RngState&, const RngState&) = default;
};

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t random_bits(std::uint64_t seed, std::uint64_t counter) {
  return mix64(seed ^ mix64(counter ^ 0xD1B54A32D192ED03ULL));
}

// Uniform double in [0, 1) with 53 random bits.
constexpr double uniform01(std::uint64_t seed, std::uint64_t counter) {
  return static_cast<double>(random_bits(seed, counter) >> 11) * 0x1.0p-53;
}

// Named substream of a run seed ("init", "dropout", "shuffle", ...).
std::uint64_t substream(std::uint64_t seed, std::string_view tag);
std::uint64_t substream(std::uint64_t seed, std::string_view tag, std::uint64_t index);

// Sequential reader over a counter-based stream.
class Rng {
 public:
  Rng() = default;
  explicit Rng(RngState state) : state_(state) {}
  explicit Rng(std::uint64_t seed) : state_{seed, 0} {}

  std::uint64_t next_bits() { return random_bits(state_.seed, state_.counter++); }
  double uniform() { return uniform01(state_.seed, state_.counter++); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n); n > 0.
  std::uint64_t below(std::uint64_t n);
  // Exponential(1) variate.
  double exponential();

  const RngState& state() const { return state_; }

 private:
  RngState state_;
};

}  // namespace mixmt
