#pragma once

#include <cstdint>
#include <random>

namespace syncsim {

using Rng = std::mt19937_64;

// Independent named streams derived from one experiment seed. Keeping the
// network dynamics, task arrivals and agent exploration on separate streams
// means every policy run with the same seed sees the same ground truth.
enum class Stream : std::uint32_t {
  kTopology = 1,
  kDynamics = 2,
  kTasks = 3,
  kTaskRates = 4,
  kAgent = 5,
  kAgentInit = 6,
};

inline Rng make_rng(std::uint64_t seed, Stream stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), 0x5eedu};
  return Rng(seq);
}

inline double uniform_real(Rng& rng, double lo, double hi) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {
  return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline bool bernoulli(Rng& rng, double p) {
  if (p <= 0.0) return false;
  if (p >= 1.0) return true;
  return std::bernoulli_distribution(p)(rng);
}

}  // namespace syncsim
