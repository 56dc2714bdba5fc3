#pragma once

#include <cstdint>
#include <string_view>

namespace gfn {

// Counter-based generator (splitmix64 core): draw i of a stream with key k is
// mix(k + i*phi). Streams are split by deriving new keys, so the sampling,
// initialization and evaluation streams of a run are independent of each
// other and of thread schedule.
class Rng {
 public:
  Rng() = default;
  explicit Rng(std::uint64_t key) : key_(key) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ull * ++counter_); }

  // uniform in [0, 1), 53-bit resolution
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform in {0, ..., n-1}
  std::uint64_t next_below(std::uint64_t n) {
    // width is tiny everywhere we use this; modulo bias is < n / 2^64
    return next_u64() % n;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  Rng split(std::uint64_t tag) const { return Rng(mix(key_ ^ mix(tag))); }
  Rng split(std::string_view tag) const { return split(fnv1a(tag)); }

  static std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
    return h;
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace gfn
