#pragma once

#include <cstdint>
#include <random>

namespace panelvar {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic substream keyed by (seed, a, b, c). Streams for distinct keys
// are independent regardless of the order or thread they are consumed in,
// which is what makes worker-count-independent output possible.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = splitmix64(seed);
  s = splitmix64(s ^ splitmix64(a + 0x1000000000000001ULL));
  s = splitmix64(s ^ splitmix64(b + 0x2000000000000003ULL));
  s = splitmix64(s ^ splitmix64(c + 0x3000000000000005ULL));
  return std::mt19937_64(s);
}

}  // namespace panelvar
