#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace crowdreg {

using Rng = std::mt19937_64;

// Purposes for independent random streams derived from one master seed.
enum class Stream : std::uint64_t {
  graph = 1,
  world = 2,
  answers = 3,
  trial = 4,
};

inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives a child seed from `seed` and a path of indices. Distinct paths give
// statistically independent streams.
inline std::uint64_t derive_seed(std::uint64_t seed,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t state = seed;
  std::uint64_t out = splitmix64(state);
  for (std::uint64_t p : path) {
    state ^= out + p * 0xd1b54a32d192ed03ULL;
    out = splitmix64(state);
  }
  return out;
}

inline std::uint64_t derive_seed(std::uint64_t seed, Stream s,
                                 std::uint64_t index = 0) {
  return derive_seed(seed, {static_cast<std::uint64_t>(s), index});
}

}  // namespace crowdreg
