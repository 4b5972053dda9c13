#pragma once

#include <cstdint>
#include <random>

namespace agin {

using Rng = std::mt19937_64;

/// Independent sub-streams derived from one experiment seed. Each consumer draws
/// from its own stream so that, e.g., enabling failures leaves physics noise intact.
enum class Stream : std::uint64_t {
  UserInit = 1,
  Mobility = 2,
  UavNoise = 3,
  Shadowing = 4,
  Failure = 5,
  Policy = 6,
  Minibatch = 7,
  Shuffle = 8,
  WeightInit = 9,
  KMeans = 10,
};

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

/// Deterministic child seed (splitmix64 over the inputs), e.g. per episode and environment.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ b);
}

}  // namespace agin
