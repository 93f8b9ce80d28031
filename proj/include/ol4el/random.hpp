#pragma once

#include <cstdint>
#include <random>

namespace ol4el {

using Rng = std::mt19937_64;

// Independent, reproducible streams derived from one experiment seed.
enum class Stream : std::uint32_t {
  Data = 1,
  Partition = 2,
  Init = 3,
  Bandit = 4,
  EdgeCost = 5,
  Generator = 6,
};

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

}  // namespace ol4el
