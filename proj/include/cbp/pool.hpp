#pragma once

#include "cbp/particle.hpp"
#include "cbp/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace cbp {

/// Per-iteration pool sizes and the quantile orders they realise for a fixed
/// particle count: order[t] = particles / pool_sizes[t].
struct ToleranceSchedule {
  std::vector<std::size_t> pool_sizes;
  std::vector<double> quantile_orders;

  static ToleranceSchedule from_pools(std::vector<std::size_t> pool_sizes, std::size_t particles);
  std::size_t iterations() const { return pool_sizes.size(); }
};

/// Number of worker threads to use; 0 means hardware concurrency.
std::size_t resolve_threads(std::size_t requested);

/// Runs fn(i) for i in [begin, end) on up to `threads` workers. Each index is
/// processed exactly once; fn must only write to per-index state.
void parallel_for(std::size_t begin, std::size_t end, std::size_t threads, const std::function<void(std::size_t)>& fn);

/// Produces one candidate for a task. Returning std::nullopt or a particle
/// with infinite distance discards the candidate.
using CandidateSampler = std::function<std::optional<Particle>(std::uint64_t task, Rng& rng)>;

struct PoolOptions {
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;
  std::size_t threads = 1;
  /// Hard cap on attempts, as a multiple of pool_size.
  double max_attempts_factor = 100.0;
  /// Also return every comparable candidate, not only the kept ones.
  bool retain_all = false;
};

struct PoolResult {
  std::vector<Particle> particles;  // sorted by (distance, task)
  double epsilon = 0.0;             // largest retained distance
  std::size_t attempts = 0;
  std::size_t discarded = 0;
  std::vector<Particle> pool;       // all comparable candidates when retain_all is set
};

/// Collects the first pool_size comparable candidates (in task order) and
/// keeps the `keep` closest ones. The result depends only on the sampler, the
/// sizes, and (seed, stream), not on the thread count.
PoolResult run_pool(const CandidateSampler& sampler, std::size_t pool_size, std::size_t keep, const PoolOptions& options);

} // namespace cbp
