#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace hamlearn {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed for the stream identified by (base, ids...). Distinct id paths give
// statistically independent streams.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> ids) {
  std::uint64_t s = splitmix64(base);
  for (auto id : ids) s = splitmix64(s ^ splitmix64(id + 0x632be59bd9b4e019ULL));
  return s;
}

inline Rng make_rng(std::uint64_t base, std::initializer_list<std::uint64_t> ids = {}) {
  return Rng(derive_seed(base, ids));
}

}  // namespace hamlearn
