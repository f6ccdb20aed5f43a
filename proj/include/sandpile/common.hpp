#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace sandpile {

using SiteId = std::uint32_t;
using Height = std::int64_t;
using ToppleCount = std::uint64_t;

/// Engine RNG. Every stochastic entry point takes one of these or a
/// 64-bit seed from which it derives per-replica streams.
using Rng = std::mt19937_64;

/// Raised when an input violates an operation's precondition.
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a volume or enumeration would exceed a configured size cap.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when a relaxation exceeds its toppling budget or a counter would
/// overflow. Under a valid toppling matrix this signals a bug.
class StabilizationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an operation refuses to run, e.g. a non-summable addition rate.
class RefusedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derives an independent stream seed from a base seed and up to two keys
/// (site id, run index, chunk index, ...). Pure function of its inputs.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                    std::uint64_t b = 0) noexcept {
  return mix64(mix64(mix64(base) ^ (a + 0x632be59bd9b4e019ULL)) ^
               (b + 0x8cb92ba72f3d8dd7ULL));
}

/// Uniform double in [0, 1) built from the top 53 bits; unlike
/// std::uniform_real_distribution its output is identical across standard
/// libraries.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n) by Lemire's multiply-shift with rejection.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
  if (n == 0) throw PreconditionError("uniform_below: empty range");
  const unsigned __int128 threshold = (-n) % n;
  for (;;) {
    const unsigned __int128 m = static_cast<unsigned __int128>(rng()) * n;
    if (static_cast<std::uint64_t>(m) >= threshold) {
      return static_cast<std::uint64_t>(m >> 64);
    }
  }
}

}  // namespace sandpile
