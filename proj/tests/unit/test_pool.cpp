#include "cbp/errors.hpp"
#include "cbp/pool.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <numeric>

using namespace cbp;

namespace {

std::optional<Particle> noisy_sampler(std::uint64_t, Rng& rng) {
  const double u = uniform01(rng);
  if (u < 0.3) {
    return std::nullopt;
  }
  Particle p;
  p.kappa = 2;
  p.probs = {0.2, 0.3, 0.5};
  p.gamma = uniform01(rng);
  p.distance = uniform01(rng);
  return p;
}

} // namespace

TEST(Pool, IdenticalAcrossThreadCounts) {
  PoolOptions one;
  one.seed = 9;
  one.stream = 77;
  one.threads = 1;
  PoolOptions four = one;
  four.threads = 4;
  const auto a = run_pool(noisy_sampler, 3000, 100, one);
  const auto b = run_pool(noisy_sampler, 3000, 100, four);
  EXPECT_EQ(a.particles, b.particles);
  EXPECT_EQ(a.attempts, b.attempts);
  EXPECT_EQ(a.discarded, b.discarded);
  EXPECT_EQ(a.epsilon, b.epsilon);
}

TEST(Pool, KeepsClosestSorted) {
  PoolOptions opt;
  opt.retain_all = true;
  const auto r = run_pool(noisy_sampler, 2000, 50, opt);
  ASSERT_EQ(r.particles.size(), 50u);
  ASSERT_EQ(r.pool.size(), 2000u);
  EXPECT_TRUE(std::is_sorted(r.pool.begin(), r.pool.end(),
                             [](const Particle& x, const Particle& y) { return x.distance < y.distance; }));
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(r.particles[i], r.pool[i]);
  }
  EXPECT_EQ(r.epsilon, r.particles.back().distance);
  EXPECT_EQ(r.attempts, r.discarded + 2000);

  PoolOptions plain;
  const auto q = run_pool(noisy_sampler, 2000, 50, plain);
  EXPECT_EQ(q.particles, r.particles);
  EXPECT_TRUE(q.pool.empty());
}

TEST(Pool, BudgetExceeded) {
  PoolOptions opt;
  opt.max_attempts_factor = 3.0;
  auto never = [](std::uint64_t, Rng&) -> std::optional<Particle> { return std::nullopt; };
  EXPECT_THROW(run_pool(never, 100, 10, opt), BudgetExceeded);
}

TEST(Pool, RejectsBadSizes) {
  EXPECT_THROW(run_pool(noisy_sampler, 10, 0, {}), ConfigError);
  EXPECT_THROW(run_pool(noisy_sampler, 10, 11, {}), ConfigError);
}

TEST(Pool, ParallelForVisitsEachIndexOnce) {
  std::vector<std::atomic<int>> hits(1000);
  parallel_for(0, hits.size(), 4, [&](std::size_t i) { hits[i]++; });
  for (const auto& h : hits) {
    EXPECT_EQ(h.load(), 1);
  }
}

TEST(Pool, ParallelForPropagatesExceptions) {
  EXPECT_THROW(parallel_for(0, 100, 3,
                            [](std::size_t i) {
                              if (i == 57) {
                                throw DomainError("boom");
                              }
                            }),
               DomainError);
}

TEST(Schedule, QuantileOrders) {
  const auto s = ToleranceSchedule::from_pools({8000, 40000, 200000}, 200);
  ASSERT_EQ(s.iterations(), 3u);
  EXPECT_DOUBLE_EQ(s.quantile_orders[0], 0.025);
  EXPECT_DOUBLE_EQ(s.quantile_orders[1], 0.005);
  EXPECT_DOUBLE_EQ(s.quantile_orders[2], 0.001);
  EXPECT_THROW(ToleranceSchedule::from_pools({100, 100}, 10), ConfigError);
  EXPECT_THROW(ToleranceSchedule::from_pools({5}, 10), ConfigError);
  EXPECT_THROW(ToleranceSchedule::from_pools({}, 10), ConfigError);
}

TEST(Rng, SubstreamsDependOnlyOnInputs) {
  auto a = substream(1, 2, 3);
  auto b = substream(1, 2, 3);
  auto c = substream(1, 2, 4);
  EXPECT_EQ(a(), b());
  EXPECT_NE(substream(1, 2, 3)(), c());
}

TEST(Rng, DirichletOnSimplex) {
  Rng rng(1);
  const std::vector<double> alpha{0.001, 0.5, 2.0, 30.0};
  for (int i = 0; i < 200; ++i) {
    const auto x = sample_dirichlet(alpha, rng);
    EXPECT_NEAR(std::accumulate(x.begin(), x.end(), 0.0), 1.0, 1e-12);
    for (double v : x) {
      EXPECT_GE(v, 0.0);
    }
  }
}
