#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string_view>

#include "dcl/common.hpp"

namespace dcl {

// Deterministic splittable RNG. All randomness in the library flows through
// this type so that a single 64-bit seed reproduces every tensor bit-for-bit,
// independent of the standard library's distribution implementations.
//
// Core generator: xoshiro256++, seeded via splitmix64. Streams are derived by
// hashing a name (or integer salt) into the seed, so e.g. the "gumbel" stream
// can be consumed at a different rate without perturbing "init" or "batch".
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  // Derive an independent stream. Same (seed, name) always yields the same
  // stream; different names decorrelate.
  Rng stream(std::string_view name) const;
  Rng stream(std::uint64_t salt) const;

  std::uint64_t next_u64();

  // Uniform in [0, 1) with 53 random mantissa bits.
  double uniform();
  double uniform(double lo, double hi);

  // Unbiased-enough index in [0, n). Lemire multiply-shift, no rejection.
  std::size_t uniform_index(std::size_t n);

  // Standard normal via Box-Muller; the spare value is cached.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Gumbel(0, 1) sample: -log(-log(U)).
  double gumbel();

  // Inverse-CDF draw from an unnormalized weight vector.
  int categorical(std::span<const double> weights);

  // Uniformly random sign: +1 or -1.
  double sign() { return (next_u64() >> 63) ? 1.0 : -1.0; }

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dcl
