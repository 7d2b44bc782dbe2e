#pragma once

// Portable draws on top of the raw mt19937_64 stream. The standard
// distributions are implementation-defined, which breaks bit-reproducibility
// across standard libraries.

#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace focusrl::rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  return splitmix64(a ^ splitmix64(b + 0x632BE59BD9B4E019ull));
}

inline double uniform01(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

/// Unbiased draw in [0, n), n > 0.
inline std::size_t bounded(std::mt19937_64& g, std::size_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r;
  do {
    r = g();
  } while (r >= limit);
  return static_cast<std::size_t>(r % n);
}

template <class T>
void shuffle(std::vector<T>& v, std::mt19937_64& g) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[bounded(g, i)]);
  }
}

}  // namespace focusrl::rng
