#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace picard {

// Every stochastic routine takes an explicit stream. Sub-streams are derived
// from a master seed and a path of integer keys, so the numbers drawn for a
// given (seed, keys...) never depend on scheduling or worker count.
using Stream = std::mt19937_64;

constexpr std::uint64_t kDefaultSeed = 1337;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline constexpr std::uint64_t derive_seed(std::uint64_t master,
                                           std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t h = splitmix64(master ^ 0x5049434152444d43ULL);
  for (std::uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

inline Stream make_stream(std::uint64_t master, std::initializer_list<std::uint64_t> keys) {
  return Stream(derive_seed(master, keys));
}

// Domain tags that keep sub-stream families of different modules apart.
namespace stream_tag {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kTrainBatch = 2;
inline constexpr std::uint64_t kTrainEval = 3;
inline constexpr std::uint64_t kWindowSample = 4;
inline constexpr std::uint64_t kTheoryTrial = 5;
inline constexpr std::uint64_t kTheorySemi = 6;
inline constexpr std::uint64_t kCorpus = 7;
}  // namespace stream_tag

}  // namespace picard
