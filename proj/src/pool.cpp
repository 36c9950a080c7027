#include "cbp/pool.hpp"

#include "cbp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

namespace cbp {

double particle_mean(const Particle& p) {
  double m = 0.0;
  for (std::size_t j = 1; j < p.probs.size(); ++j) {
    m += static_cast<double>(j) * p.probs[j];
  }
  return m;
}

ToleranceSchedule ToleranceSchedule::from_pools(std::vector<std::size_t> pool_sizes, std::size_t particles) {
  if (pool_sizes.empty()) {
    throw ConfigError("tolerance schedule needs at least one iteration");
  }
  if (particles == 0) {
    throw ConfigError("particle count must be positive");
  }
  ToleranceSchedule s;
  for (std::size_t t = 0; t < pool_sizes.size(); ++t) {
    if (pool_sizes[t] < particles) {
      throw ConfigError("every pool must hold at least as many simulations as particles");
    }
    if (t > 0 && pool_sizes[t] <= pool_sizes[t - 1]) {
      throw ConfigError("pool sizes must increase strictly so quantile orders decrease");
    }
    s.quantile_orders.push_back(static_cast<double>(particles) / static_cast<double>(pool_sizes[t]));
  }
  s.pool_sizes = std::move(pool_sizes);
  return s;
}

std::size_t resolve_threads(std::size_t requested) {
  if (requested > 0) {
    return requested;
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t begin, std::size_t end, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (end <= begin) {
    return;
  }
  const std::size_t total = end - begin;
  const std::size_t workers = std::min(resolve_threads(threads), total);
  if (workers <= 1) {
    for (std::size_t i = begin; i < end; ++i) {
      fn(i);
    }
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = begin + w; i < end; i += workers) {
            fn(i);
          }
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) {
            failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) {
    std::rethrow_exception(failure);
  }
}

namespace {

bool closer(const Particle& a, const Particle& b) {
  if (a.distance != b.distance) {
    return a.distance < b.distance;
  }
  return a.task < b.task;
}

void trim_to_best(std::vector<Particle>& v, std::size_t keep) {
  if (v.size() > keep) {
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(keep), v.end(), closer);
    v.resize(keep);
  }
}

} // namespace

PoolResult run_pool(const CandidateSampler& sampler, std::size_t pool_size, std::size_t keep, const PoolOptions& options) {
  if (keep == 0 || keep > pool_size) {
    throw ConfigError("run_pool needs 0 < keep <= pool_size");
  }
  const auto max_attempts = static_cast<std::size_t>(std::ceil(options.max_attempts_factor * static_cast<double>(pool_size)));

  PoolResult result;
  std::vector<Particle> best;
  best.reserve(2 * keep);
  std::size_t accepted = 0;
  std::uint64_t next_task = 0;
  double acceptance_rate = 1.0;

  while (accepted < pool_size) {
    if (result.attempts >= max_attempts) {
      std::ostringstream os;
      os << "simulation budget exceeded: " << result.attempts << " attempts yielded only " << accepted << " of "
         << pool_size << " comparable simulations (prior and data look mismatched)";
      throw BudgetExceeded(os.str());
    }
    const std::size_t needed = pool_size - accepted;
    std::size_t batch = static_cast<std::size_t>(std::ceil(1.1 * static_cast<double>(needed) / std::max(acceptance_rate, 1e-3)));
    batch = std::clamp<std::size_t>(batch, 256, 1 << 16);
    batch = std::min(batch, max_attempts - result.attempts);

    std::vector<std::optional<Particle>> slots(batch);
    const std::uint64_t first = next_task;
    parallel_for(0, batch, options.threads, [&](std::size_t i) {
      const std::uint64_t task = first + i;
      Rng rng = substream(options.seed, options.stream, task);
      auto candidate = sampler(task, rng);
      if (candidate && std::isfinite(candidate->distance)) {
        candidate->task = task;
        slots[i] = std::move(candidate);
      }
    });

    std::size_t batch_accepted = 0;
    std::size_t used = 0;
    for (std::size_t i = 0; i < batch && accepted < pool_size; ++i) {
      ++used;
      if (slots[i]) {
        ++accepted;
        ++batch_accepted;
        best.push_back(std::move(*slots[i]));
      } else {
        ++result.discarded;
      }
    }
    result.attempts += used;
    next_task += used;
    acceptance_rate = std::max(1e-3, static_cast<double>(batch_accepted) / static_cast<double>(used));
    if (!options.retain_all && best.size() >= 2 * keep) {
      trim_to_best(best, keep);
    }
  }
  if (options.retain_all) {
    std::sort(best.begin(), best.end(), closer);
    result.particles.assign(best.begin(), best.begin() + static_cast<std::ptrdiff_t>(keep));
    result.pool = std::move(best);
  } else {
    trim_to_best(best, keep);
    std::sort(best.begin(), best.end(), closer);
    result.particles = std::move(best);
  }
  result.epsilon = result.particles.back().distance;
  return result;
}

} // namespace cbp
