#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace sfe {

/// Generator used everywhere a seeded stream is needed. Its name is written
/// into every persisted metadata record.
using Rng = std::mt19937_64;
inline constexpr std::string_view kRngName = "mt19937_64";

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Independent substream for one variable family under a base seed.
inline Rng substream(std::uint64_t seed, std::uint64_t family) {
  return Rng(splitmix64(seed ^ splitmix64(family + 1)));
}

/// Unbiased integer in [0, bound) by rejection; portable across standard
/// libraries, unlike std::uniform_int_distribution.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
  const std::uint64_t limit = Rng::max() - (Rng::max() % bound + 1) % bound;
  for (;;) {
    const std::uint64_t draw = rng();
    if (draw <= limit) return draw % bound;
  }
}

/// Fisher-Yates shuffle with a fixed draw sequence.
template <typename T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t k = items.size(); k > 1; --k) {
    const auto pick = static_cast<std::size_t>(uniform_below(rng, k));
    std::swap(items[k - 1], items[pick]);
  }
}

/// Uniform double in [0, 1) built from the top 53 bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace sfe
