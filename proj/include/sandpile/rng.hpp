#pragma once

#include <cstdint>
#include <random>

namespace sandpile {

/// Engine used by every sampler in the library.
using Rng = std::mt19937_64;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace detail

/// Derives the seed of a child stream from a parent seed and a child index.
///
/// Seeding discipline: master seed -> experiment tag -> sample index.  A
/// sample's stream depends only on (master, tag, index), so splitting the
/// sample range across any number of replicas reproduces the same draws.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
  return detail::splitmix64(detail::splitmix64(parent) ^ detail::splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline Rng make_stream(std::uint64_t master, std::uint64_t tag, std::uint64_t index) {
  return Rng{derive_seed(derive_seed(master, tag), index)};
}

inline Rng make_stream(std::uint64_t master, std::uint64_t index) {
  return Rng{derive_seed(master, index)};
}

}  // namespace sandpile
