#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace tipas {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// FNV-1a; stable across platforms, unlike std::hash.
inline std::uint64_t stable_hash(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Independent stream keyed by (seed, key, index). Streams do not depend on
/// the order in which they are created.
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t key, std::uint64_t index = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ key) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

/// mt19937_64 with hand-rolled variates so sequences match across standard
/// libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() {  // (0, 1)
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double exponential(double rate) { return -std::log(uniform()) / rate; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace tipas
