// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

namespace fishmask {

// SplitMix64 finalizer. Used to derive independent sub-seeds from one run
// seed so that e.g. the training shuffle and the Fisher-estimation shuffle
// never share a stream.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Stream salts. Keep stable: changing one changes every derived RNG stream.
enum class Stream : std::uint64_t {
  kInit = 1,
  kTrainShuffle = 2,
  kFisherShuffle = 3,
  kFisherDraws = 4,
  kRandomMask = 5,
  kBlobs = 6,
  kMoons = 7,
  kShard = 8,
  kSplit = 9,
  kWarmup = 10,
  kWorkerData = 11,
};

constexpr std::uint64_t sub_seed(std::uint64_t seed, Stream stream,
                                 std::uint64_t salt = 0) {
  return splitmix64(splitmix64(seed ^ (static_cast<std::uint64_t>(stream)
                                       * 0xd1342543de82ef95ULL)) ^
                    salt);
}

inline std::mt19937_64 make_rng(std::uint64_t seed, Stream stream,
                                std::uint64_t salt = 0) {
  return std::mt19937_64(sub_seed(seed, stream, salt));
}

}  // namespace fishmask
