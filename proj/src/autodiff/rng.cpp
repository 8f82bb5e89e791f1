// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mixmt/rng.hpp"

#include <cmath>

namespace mixmt {

namespace {

// FNV-1a over the tag bytes.
std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t substream(std::uint64_t seed, std::string_view tag) {
  return mix64(seed ^ mix64(hash_tag(tag)));
}

std::uint64_t substream(std::uint64_t seed, std::string_view tag, std::uint64_t index) {
  return mix64(substream(seed, tag) ^ mix64(index + 0x632BE59BD9B4E019ULL));
}

std::uint64_t Rng::below(std::uint64_t n) {
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
  std::uint64_t x = next_bits();
  while (x >= limit) x = next_bits();
  return x % n;
}

double Rng::exponential() {
  double u = uniform();
  return -std::log1p(-u);
}

}  // namespace mixmt
