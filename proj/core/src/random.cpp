#include "stagecf/random.hpp"

#include <array>

namespace stagecf {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

Rng derive_stream(std::uint64_t master_seed, StreamTag tag, std::uint64_t user,
                  std::uint64_t step) {
  const auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v); };
  const auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(master_seed), hi(master_seed), static_cast<std::uint32_t>(tag),
                    lo(user),        hi(user),        lo(step),
                    hi(step)};
  return Rng(seq);
}

std::uint64_t hash_key(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  return splitmix64(splitmix64(splitmix64(a) ^ b) ^ c);
}

}  // namespace stagecf
