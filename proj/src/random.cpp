#include "lts/random.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace lts {

namespace {

// splitmix64 finalizer
std::uint64_t mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Rng substream(std::uint64_t master_seed, std::initializer_list<std::uint64_t> path) {
  std::uint64_t h = mix(master_seed);
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  for (std::uint64_t p : path) {
    h = mix(h ^ mix(p + 0x632be59bd9b4e019ULL));
    words.push_back(static_cast<std::uint32_t>(h));
    words.push_back(static_cast<std::uint32_t>(h >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
  if (bound == 0) {
    throw std::invalid_argument("uniform_below: bound must be positive");
  }
  const std::uint64_t limit = Rng::max() - (Rng::max() % bound + 1) % bound;
  std::uint64_t v = rng();
  while (v > limit) {
    v = rng();
  }
  return v % bound;
}

std::vector<int> srswor(int N, int n, Rng& rng) {
  if (n < 0 || n > N) {
    throw std::invalid_argument("srswor: cannot draw " + std::to_string(n) + " of " + std::to_string(N));
  }
  std::vector<int> pool(static_cast<std::size_t>(N));
  std::iota(pool.begin(), pool.end(), 0);
  for (int k = 0; k < n; ++k) {
    const auto j = k + static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(N - k)));
    std::swap(pool[k], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(n));
  std::sort(pool.begin(), pool.end());
  return pool;
}

}  // namespace lts
