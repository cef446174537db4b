#pragma once

#include <cstdint>
#include <random>

namespace posthoc {

using Rng = std::mt19937_64;

// splitmix64 finalizer (Steele, Lea, Flood 2014).
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from (base, index). Distinct indices
// give distinct children for a fixed base.
constexpr std::uint64_t child_seed(std::uint64_t base, std::uint64_t index) {
  return mix64(base ^ mix64(index + 0x632BE59BD9B4E019ULL));
}

// Named sub-streams used across the pipeline so that every consumer draws
// from its own generator.
enum class Stream : std::uint64_t {
  kTrainData = 1,
  kTestData = 2,
  kCalibData = 3,
  kCorruption = 4,
  kInit = 5,
  kMap = 6,
  kSampler = 7,
  kMinibatch = 8,
  kStudentInit = 9,
  kDistill = 10,
  kCalibration = 11,
  kVi = 12,
  kLcSampler = 13,
  kCwSgd = 14,
};

constexpr std::uint64_t stream_seed(std::uint64_t base, Stream s) {
  return child_seed(base, static_cast<std::uint64_t>(s) << 32);
}

}  // namespace posthoc
