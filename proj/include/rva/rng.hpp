#pragma once

#include <cstdint>
#include <random>

namespace rva {

/// Subsystems that draw random numbers. Each (seed, attempt, stream) triple
/// maps to an independent generator, so adding draws in one subsystem never
/// perturbs another.
enum class Stream : std::uint32_t {
  Scenario = 1,
  Localization = 2,
  Calibration = 3,
  Imaging = 4,
  Detection = 5,
  Force = 6,
  Positioning = 7,
};

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Counter-based stream derivation: the generator state depends only on the
/// trial seed, the attempt index and the subsystem id.
inline Rng make_stream(std::uint64_t seed, Stream stream, std::uint32_t attempt = 0) {
  std::uint64_t key = mix64(seed);
  key = mix64(key ^ (static_cast<std::uint64_t>(stream) << 32));
  key = mix64(key ^ attempt);
  return Rng(key);
}

}  // namespace rva
