#pragma once

#include <cstdint>
#include <random>

namespace tiltdid {

// Stream tags keep draws for different purposes independent under one seed.
enum class StreamTag : std::uint32_t { folds = 1, scenario = 2, oracle = 3 };

// Independent engine for (seed, tag, stream id). Seeding through seed_seq
// mixes all words, so neighbouring replicate ids do not produce correlated
// engines.
inline std::mt19937_64 make_engine(std::uint64_t seed, StreamTag tag, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(tag), static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

}  // namespace tiltdid
