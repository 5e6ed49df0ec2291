#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace egfn {

using Rng = std::mt19937_64;

// Independent stream keyed by (seed, key...). Streams with different keys are
// uncorrelated for practical purposes and do not depend on consumption order
// elsewhere in the program.
inline Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> key) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * key.size());
  words.push_back(static_cast<std::uint32_t>(seed));
  words.push_back(static_cast<std::uint32_t>(seed >> 32));
  for (std::uint64_t k : key) {
    words.push_back(static_cast<std::uint32_t>(k));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

// Uniform in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Uniform in {0, ..., n-1}; n must be positive.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = Rng::max() - Rng::max() % bound;
  std::uint64_t draw;
  do {
    draw = rng();
  } while (draw >= limit);
  return static_cast<std::size_t>(draw % bound);
}

// Stream tags. Keep stable: changing a value changes every seeded run.
enum class StreamTag : std::uint64_t {
  kStarInit = 1,
  kPopulationInit = 2,
  kEvaluate = 3,
  kBreed = 4,
  kOnline = 5,
  kOffline = 6,
};

inline Rng make_stream(std::uint64_t seed, StreamTag tag, std::uint64_t a = 0,
                       std::uint64_t b = 0) {
  return make_stream(seed, {static_cast<std::uint64_t>(tag), a, b});
}

}  // namespace egfn
