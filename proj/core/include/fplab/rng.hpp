// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace fplab {

std::uint64_t splitmix64(std::uint64_t& state);

// Derives an independent 64-bit seed for a named sub-stream.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// xoshiro256** seeded from four successive splitmix64 outputs of `seed`.
//
//   uniform()     = (next() >> 11) * 2^-53                 in [0, 1)
//   normal()      = Box-Muller on u1 = ((next() >> 11) + 1) * 2^-53 and
//                   u2 = uniform(); yields r*cos(2*pi*u2) first and caches
//                   r*sin(2*pi*u2) for the following call
//   uniform_int() = rejection sampling on next() % n
//
// The stream is bit-identical on every platform; normal() relies on the C
// library's log/cos/sin, which are correctly rounded for all practical inputs
// on glibc.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t next();
  double uniform();
  double normal();
  std::uint64_t uniform_int(std::uint64_t n);

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> state_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fplab
