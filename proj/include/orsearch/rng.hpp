#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string_view>

namespace orsearch {

/// FNV-1a 64-bit hash. Used for dataset/config fingerprints and for
/// deriving per-call RNG streams from string identifiers.
inline std::uint64_t fnv1a64_bytes(const void* data, std::size_t len,
                                   std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a64_bytes(s.data(), s.size(), h);
}

/// Counter-based 64-bit generator. Output i (1-based internally) is
///
///   mix64(seed + i * 0x9E3779B97F4A7C15)
///
/// where mix64 is the splitmix64 finalizer:
///
///   z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9;
///   z ^= z >> 27;  z *= 0x94D049BB133111EB;
///   z ^= z >> 31;
///
/// All arithmetic is modulo 2^64. The stream for a given seed is therefore
/// a pure function of (seed, counter) and trivially reproducible in any
/// language; see the unit tests for frozen vectors (seed 0 yields
/// e220a8397b1dcdaf, 6e789e6aa1b965f4, ...).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  static std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() {
    counter_ += 1;
    return mix64(seed_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }

  /// Unbiased uniform draw from [0, n). Rejects the first (2^64 mod n)
  /// values of each raw draw, then reduces modulo n.
  std::uint64_t next_below(std::uint64_t n) {
    const std::uint64_t threshold = (0 - n) % n;  // == 2^64 mod n
    for (;;) {
      const std::uint64_t v = next_u64();
      if (v >= threshold) {
        return v % n;
      }
    }
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in (0, 1]; safe as a log() argument.
  double next_unit_open() {
    return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller. Consumes exactly two raw draws and
  /// discards the sine branch, so the stream position stays predictable.
  double next_gaussian() {
    const double u1 = next_unit_open();
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
  }

  std::uint64_t counter() const { return counter_; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

}  // namespace orsearch
