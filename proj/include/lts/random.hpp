#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace lts {

using Rng = std::mt19937_64;

/// Independent stream keyed by (master seed, path). Replicate b of Monte Carlo
/// sample r is substream(seed, {tag, r, b}); the result does not depend on the
/// order in which streams are created, which is what makes threaded runs
/// reproduce sequential ones.
Rng substream(std::uint64_t master_seed, std::initializer_list<std::uint64_t> path);

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

/// Uniform integer in [0, bound) by rejection; bound > 0.
std::uint64_t uniform_below(Rng& rng, std::uint64_t bound);

/// Simple random sample without replacement of `n` indices from [0, N),
/// returned in ascending order. Requires n <= N.
std::vector<int> srswor(int N, int n, Rng& rng);

// Stream tags, kept stable so persisted runs stay reproducible.
namespace stream {
inline constexpr std::uint64_t kPopulation = 1;
inline constexpr std::uint64_t kSample = 2;
inline constexpr std::uint64_t kBootstrap = 3;
inline constexpr std::uint64_t kCorrelation = 4;
}  // namespace stream

}  // namespace lts
