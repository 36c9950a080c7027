#include "cbp/errors.hpp"
#include "cbp/smc.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace cbp;

namespace {

double integrate_gamma(double new_mean, double parent_gamma, double parent_mean, const ControlLaw& family,
                       const ControlPrior& prior, double sigma) {
  const int n = 200000;
  const double h = prior.width() / n;
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    const double g = prior.lower() + (i + 0.5) * h;
    acc += std::exp(proposal_gamma_log_density(g, new_mean, parent_gamma, parent_mean, family, prior, sigma));
  }
  return acc * h;
}

ObservedSample toy_observation() {
  ObservedSample obs;
  obs.sizes = {1, 2, 4, 7, 12, 20};
  obs.last_progenitors = 9;
  return obs;
}

} // namespace

TEST(Proposal, BinomialGammaDensityIntegratesToOne) {
  const auto family = ControlLaw::binomial_xi(0.5);
  const auto prior = ControlPrior::beta(1, 1);
  EXPECT_NEAR(integrate_gamma(3.0, 0.8, 3.6, family, prior, 0.3), 1.0, 1e-6);
  EXPECT_NEAR(integrate_gamma(1.2, 0.95, 2.0, family, prior, 0.05), 1.0, 1e-6);
  EXPECT_NEAR(integrate_gamma(6.0, 0.1, 5.0, family, prior, 2.0), 1.0, 1e-6);
}

TEST(Proposal, GrowthDensityIntegratesToOne) {
  const auto family = ControlLaw::density_dependent(GrowthFamily::verhulst, 0.0, 5000.0);
  const auto prior = ControlPrior::uniform(5000, 10000);
  EXPECT_NEAR(integrate_gamma(2.0, 9800.0, 2.0, family, prior, 700.0), 1.0, 1e-6);
  EXPECT_NEAR(integrate_gamma(2.0, 7000.0, 2.0, family, prior, 50.0), 1.0, 1e-6);
}

TEST(Proposal, SamplerMatchesDensity) {
  const auto family = ControlLaw::binomial_xi(0.5);
  const auto prior = ControlPrior::beta(1, 1);
  Rng rng(3);
  const int draws = 100000;
  const int bins = 20;
  std::vector<int> hist(bins, 0);
  for (int i = 0; i < draws; ++i) {
    const auto g = propose_gamma(0.8, 3.6, 3.0, family, prior, 0.4, rng);
    ASSERT_TRUE(g);
    ++hist[static_cast<std::size_t>(std::min(bins - 1, static_cast<int>(*g * bins)))];
  }
  for (int b = 0; b < bins; ++b) {
    double mass = 0.0;
    for (int k = 0; k < 100; ++k) {
      const double g = (b + (k + 0.5) / 100.0) / bins;
      mass += std::exp(proposal_gamma_log_density(g, 3.0, 0.8, 3.6, family, prior, 0.4)) / (100.0 * bins);
    }
    EXPECT_NEAR(hist[static_cast<std::size_t>(b)] / static_cast<double>(draws), mass, 0.004) << "bin " << b;
  }
}

TEST(Proposal, DirichletLogPdf) {
  const std::vector<double> ones{1.0, 1.0, 1.0};
  const std::vector<double> x{0.2, 0.3, 0.5};
  EXPECT_NEAR(dirichlet_log_pdf(x, ones), std::log(2.0), 1e-12);
  const std::vector<double> alpha{2.0, 3.0};
  const std::vector<double> y{0.4, 0.6};
  // Beta(2,3) at 0.4: 12 * 0.4 * 0.36
  EXPECT_NEAR(dirichlet_log_pdf(y, alpha), std::log(12.0 * 0.4 * 0.36), 1e-12);
}

TEST(Proposal, AlphaIsScaledParent) {
  const std::vector<double> p{0.0, 0.25, 0.75};
  const auto a = proposal_alpha(p, 30.0);
  ASSERT_EQ(a.size(), 3u);
  EXPECT_GT(a[0], 0.0);
  EXPECT_NEAR(std::accumulate(a.begin(), a.end(), 0.0), 30.0, 1e-9);
  EXPECT_NEAR(a[2], 22.5, 1e-4);
}

TEST(Weights, NormalisedPerGroup) {
  std::vector<Particle> ps(5);
  const int kappas[] = {2, 2, 3, 3, 3};
  const double logs[] = {-1.0, -2.0, -700.0, -701.0, -702.0};
  for (int i = 0; i < 5; ++i) {
    ps[i].kappa = kappas[i];
    ps[i].log_raw_weight = logs[i];
  }
  const auto dropped = normalise_group_weights(ps);
  EXPECT_TRUE(dropped.empty());
  EXPECT_NEAR(ps[0].weight + ps[1].weight, 1.0, 1e-12);
  EXPECT_NEAR(ps[2].weight + ps[3].weight + ps[4].weight, 1.0, 1e-12);
  EXPECT_NEAR(ps[0].weight / ps[1].weight, std::exp(1.0), 1e-9);
}

TEST(Kappa, ImportanceAndCountEstimators) {
  std::vector<Particle> ps(4);
  ps[0].kappa = 4;
  ps[1].kappa = 4;
  ps[2].kappa = 5;
  ps[3].kappa = 6;
  ps[0].log_raw_weight = std::log(1.0);
  ps[1].log_raw_weight = std::log(1.0);
  ps[2].log_raw_weight = std::log(4.0);
  ps[3].log_raw_weight = std::log(2.0);
  const auto imp = kappa_posterior(ps, 6, KappaEstimator::importance);
  EXPECT_NEAR(imp.pmf[4], 0.25, 1e-12);
  EXPECT_NEAR(imp.pmf[5], 0.5, 1e-12);
  EXPECT_NEAR(imp.pmf[6], 0.25, 1e-12);
  EXPECT_NEAR(imp.mean, 5.0, 1e-12);
  EXPECT_EQ(imp.point_estimate, 5);
  const auto cnt = kappa_posterior(ps, 6, KappaEstimator::counts);
  EXPECT_NEAR(cnt.mean, 4.75, 1e-12);
  EXPECT_EQ(cnt.point_estimate, 5);
  EXPECT_EQ(cnt.counts[4], 2u);
}

TEST(Kappa, RoundHalfUp) {
  EXPECT_EQ(round_half_up(4.5), 5);
  EXPECT_EQ(round_half_up(4.4999), 4);
  EXPECT_EQ(round_half_up(5.5), 6);
  EXPECT_EQ(round_half_up(2.0), 2);
}

TEST(Priors, Validation) {
  EXPECT_THROW(ControlPrior::beta(0.0, 1.0), ConfigError);
  EXPECT_THROW(ControlPrior::uniform(10.0, 5.0), ConfigError);
  const auto spec = PriorSpec::make(5, ControlPrior::beta(1, 1));
  EXPECT_EQ(spec.alpha_for(5).size(), 6u);
  EXPECT_THROW(PriorSpec::make(1, ControlPrior::beta(1, 1)), ConfigError);
}

TEST(Smc, DeterministicAcrossThreads) {
  const SmcProblem problem(toy_observation(), ControlLaw::binomial_xi(0.5),
                           PriorSpec::make(4, ControlPrior::beta(1, 1)));
  SmcConfig cfg;
  cfg.particles = 50;
  cfg.schedule = ToleranceSchedule::from_pools({500, 1500}, 50);
  cfg.seed = 17;
  cfg.threads = 1;
  const auto a = run_smc(problem, cfg);
  cfg.threads = 3;
  const auto b = run_smc(problem, cfg);
  ASSERT_EQ(a.size(), 2u);
  ASSERT_EQ(b.size(), 2u);
  for (std::size_t t = 0; t < 2; ++t) {
    EXPECT_EQ(a[t].particles, b[t].particles);
    EXPECT_EQ(a[t].epsilon, b[t].epsilon);
  }
  EXPECT_LE(a[1].epsilon, a[0].epsilon);
  for (const auto& p : a[1].particles) {
    EXPECT_LE(p.distance, a[1].epsilon);
    EXPECT_GE(p.kappa, 2);
    EXPECT_LE(p.kappa, 4);
    EXPECT_NEAR(std::accumulate(p.probs.begin(), p.probs.end(), 0.0), 1.0, 1e-9);
  }
}

TEST(Smc, RetainedPoolIsWeightedPerGroup) {
  const SmcProblem problem(toy_observation(), ControlLaw::binomial_xi(0.5),
                           PriorSpec::make(3, ControlPrior::beta(1, 1)));
  SmcConfig cfg;
  cfg.particles = 40;
  cfg.schedule = ToleranceSchedule::from_pools({400, 800}, 40);
  cfg.retain_final_pool = true;
  const auto history = run_smc(problem, cfg);
  const auto& pool = history.back().pool;
  ASSERT_EQ(pool.size(), 800u);
  std::vector<double> sums(4, 0.0);
  for (const auto& p : pool) {
    sums[static_cast<std::size_t>(p.kappa)] += p.weight;
  }
  for (int k = 2; k <= 3; ++k) {
    if (sums[static_cast<std::size_t>(k)] > 0.0) {
      EXPECT_NEAR(sums[static_cast<std::size_t>(k)], 1.0, 1e-9);
    }
  }
  EXPECT_TRUE(history.front().pool.empty());
}
