#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace afl {

/// Seeded generator used by every stochastic operation.
using Rng = std::mt19937_64;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Independent stream for one named source of randomness (and an optional
/// sub-index such as a device id or a round).
inline Rng make_stream(std::uint64_t seed, std::string_view name,
                       std::uint64_t a = 0, std::uint64_t b = 0) {
  std::uint64_t s = detail::splitmix64(seed ^ detail::fnv1a(name));
  s = detail::splitmix64(s ^ detail::splitmix64(a + 1));
  s = detail::splitmix64(s ^ detail::splitmix64((b + 1) * 0x2545f4914f6cdd1dULL));
  return Rng(s);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace afl
