///   @file random.hpp
///   @brief Seed derivation shared by every stochastic stage.

#ifndef CRACKSEG_RANDOM_HPP
#define CRACKSEG_RANDOM_HPP

#include <cstdint>
#include <initializer_list>
#include <random>

namespace crackseg {

using Rng = std::mt19937_64;

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed from a master seed and a path of
/// integers (entry index, stream tag, ...).
constexpr std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = mix64(master);
  for (auto p : path) s = mix64(s ^ mix64(p + 0x632be59bd9b4e019ULL));
  return s;
}

}  // namespace crackseg

#endif  // CRACKSEG_RANDOM_HPP
