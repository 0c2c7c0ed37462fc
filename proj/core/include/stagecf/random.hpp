#pragma once

#include <cstdint>
#include <random>

namespace stagecf {

using Rng = std::mt19937_64;

/// Purpose tags for derived random streams. Every stochastic draw in the
/// pipeline comes from a stream keyed by (master seed, tag, user, step), so a
/// user's draws do not depend on the order in which users are processed.
enum class StreamTag : std::uint32_t {
  init = 1,
  shuffle = 2,
  train = 3,
  dropout = 4,
  recommend = 5,
  split = 6,
  synth = 7,
  verify = 8,
};

Rng derive_stream(std::uint64_t master_seed, StreamTag tag, std::uint64_t user = 0,
                  std::uint64_t step = 0);

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Stateless 64-bit mix of a key tuple (splitmix64 finalizer chained).
std::uint64_t hash_key(std::uint64_t a, std::uint64_t b, std::uint64_t c);

}  // namespace stagecf
