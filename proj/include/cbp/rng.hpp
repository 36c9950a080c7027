#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace cbp {

using Rng = std::mt19937_64;

// Stream tags keep the substreams of different pipeline phases disjoint even
// when they share task indices.
enum class Stream : std::uint64_t {
  simulate = 1,
  smc_iteration = 2,   // combined with the iteration number
  oracle = 3,
  growth_grid = 4,     // combined with the grid index
  forecast = 5,
};

// Derives an independent generator from (master seed, stream, task index).
// The result depends only on the three inputs, never on which thread asks.
Rng substream(std::uint64_t master_seed, std::uint64_t stream, std::uint64_t task);

inline std::uint64_t stream_id(Stream s, std::uint64_t sub = 0) {
  return (static_cast<std::uint64_t>(s) << 32) ^ sub;
}

// log of a Gamma(shape, 1) variate. Stays finite for very small shapes where
// the variate itself underflows to zero in double precision.
double sample_log_gamma(double shape, Rng& rng);

// Dirichlet(alpha) draw. Coordinates too small for a double come out as 0;
// the result always sums to 1.
std::vector<double> sample_dirichlet(std::span<const double> alpha, Rng& rng);

double sample_beta(double a, double b, Rng& rng);

double uniform01(Rng& rng);

} // namespace cbp
