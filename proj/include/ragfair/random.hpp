#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace ragfair {

// std::uniform_int_distribution and std::shuffle are implementation-defined,
// so seeded outputs go through these helpers to stay identical across
// standard libraries. mt19937_64's raw output is fully specified.
using Rng = std::mt19937_64;

/// Uniform index in [0, n) by rejection sampling. `n` must be > 0.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % bound);
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

/// Uniform real in [0, 1).
inline double uniform_real(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_index(rng, i)]);
  }
}

}  // namespace ragfair
