#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>

namespace amq {

// SplitMix64 output function. Used both to expand seeds into generator
// state and as the mixing step of derive_seed.
std::uint64_t mix64(std::uint64_t z) noexcept;

// Stream splitting: folds an ordered key path into a child seed.
//   h0 = mix64(master ^ 0x6a09e667f3bcc909)
//   h_{i+1} = mix64(h_i ^ mix64(key_i + 0x9e3779b97f4a7c15 * (i + 1)))
// Distinct paths give statistically independent streams; the value depends
// only on integer arithmetic, so it is identical on every platform.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) noexcept;

// xoshiro256** 1.0 seeded through SplitMix64. All distributions below are
// implemented here rather than taken from <random>, whose distribution
// algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept;

  std::uint64_t next() noexcept;

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;

  // Uniform integer in [0, n). n must be > 0. Lemire's nearly-divisionless
  // method with rejection, so there is no modulo bias.
  std::uint64_t below(std::uint64_t n) noexcept;

  // Standard normal via Box-Muller; the second variate is cached.
  double normal() noexcept;

  // Poisson draw by sequential inversion of the CDF. Intended for the small
  // means used by the image generator (<= a few dozen).
  std::uint32_t poisson(double mean) noexcept;

 private:
  std::array<std::uint64_t, 4> s_{};
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace amq
