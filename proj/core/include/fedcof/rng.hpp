#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedcof {

using Rng = std::mt19937_64;

/// Derives an independent stream seed from a base seed and a tuple of
/// identifiers (class index, client id, trial, ...). Stable across platforms.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> parts);

inline Rng make_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> parts) {
  return Rng(derive_seed(seed, parts));
}

/// Stream tags used with derive_seed so unrelated consumers of one seed never
/// share a stream.
namespace stream {
inline constexpr std::uint64_t kSynthetic = 0x53594e54;
inline constexpr std::uint64_t kPartition = 0x50415254;
inline constexpr std::uint64_t kMultiMean = 0x4d554c54;
inline constexpr std::uint64_t kNoise = 0x4e4f4953;
inline constexpr std::uint64_t kMask = 0x4d41534b;
inline constexpr std::uint64_t kSchedule = 0x53434844;
inline constexpr std::uint64_t kTrial = 0x5452494c;
inline constexpr std::uint64_t kTest = 0x54455354;
}  // namespace stream

}  // namespace fedcof
