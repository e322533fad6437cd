#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace icgps {

using Rng = std::mt19937_64;

// Counter-based seed derivation: a master seed fans out to independent
// streams keyed by (tag, indices...). splitmix64 is the usual mixer for
// seeding mt19937_64 from correlated inputs.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

inline std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ull;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view tag,
                                 std::uint64_t i0 = 0, std::uint64_t i1 = 0,
                                 std::uint64_t i2 = 0) {
  std::uint64_t s = splitmix64(master ^ hash_tag(tag));
  s = splitmix64(s ^ (0x9E3779B97F4A7C15ull + i0));
  s = splitmix64(s ^ (0xC2B2AE3D27D4EB4Full + i1));
  s = splitmix64(s ^ (0x165667B19E3779F9ull + i2));
  return s;
}

inline Rng make_rng(std::uint64_t master, std::string_view tag,
                    std::uint64_t i0 = 0, std::uint64_t i1 = 0,
                    std::uint64_t i2 = 0) {
  return Rng(derive_seed(master, tag, i0, i1, i2));
}

// Uniform draws built from raw engine output so streams are bit-portable
// across standard libraries.
inline double uniform01(Rng& rng) {  // [0, 1)
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_open01(Rng& rng) {  // (0, 1)
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

inline double uniform_in(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

}  // namespace icgps
