#pragma once

#include <cstdint>
#include <random>

namespace pex {

// All randomized code draws through these helpers instead of std
// distributions, whose outputs vary between standard library
// implementations. Given the same seed the whole pipeline is reproducible
// bit for bit.
using Rng = std::mt19937_64;

inline double rng_double(Rng& rng) {
  // 53 random mantissa bits in [0, 1).
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline bool rng_bernoulli(Rng& rng, double p) { return rng_double(rng) < p; }

// Uniform integer in [0, n). Rejection sampling keeps it unbiased.
inline std::uint64_t rng_index(Rng& rng, std::uint64_t n) {
  if (n == 0) return 0;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

// Derives an independent stream for a named sub-task so that adding a
// consumer in one place does not shift draws elsewhere.
inline Rng rng_fork(std::uint64_t seed, std::uint64_t stream) {
  const std::uint64_t vals[] = {seed, stream ^ 0x9e3779b97f4a7c15ull};
  std::seed_seq seq(std::begin(vals), std::end(vals));
  return Rng(seq);
}

}  // namespace pex
