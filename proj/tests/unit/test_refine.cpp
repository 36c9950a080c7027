#include "cbp/errors.hpp"
#include "cbp/refine.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace cbp;

namespace {

Particle particle_with_path(int kappa, std::vector<Count> sizes, Count phi, std::uint64_t task) {
  Particle p;
  p.kappa = kappa;
  p.probs.assign(static_cast<std::size_t>(kappa) + 1, 1.0 / (kappa + 1));
  p.gamma = 0.5;
  p.weight = 1.0;
  p.task = task;
  p.trajectory.sizes = std::move(sizes);
  p.trajectory.last_progenitors = phi;
  return p;
}

} // namespace

TEST(Regression, RecoversPlantedConstant) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.1, 1.0);
  const int n = 400;
  Eigen::MatrixXd s(n, 3);
  Eigen::MatrixXd theta(n, 2);
  Eigen::VectorXd w(n);
  Eigen::Vector3d obs(10.0, 1.2, 0.4);
  Eigen::Matrix<double, 3, 2> b;
  b << 0.5, -2.0, 3.0, 0.25, -1.0, 7.0;
  const Eigen::Vector2d c(0.3, 0.8);
  for (int i = 0; i < n; ++i) {
    s(i, 0) = obs[0] + 5.0 * z(rng);
    s(i, 1) = obs[1] + 0.1 * z(rng);
    s(i, 2) = obs[2] + 0.01 * z(rng);
    theta.row(i) = (c + b.transpose() * (s.row(i).transpose() - obs)).transpose();
    w[i] = u(rng);
  }
  const auto r = local_linear_adjust(theta, s, obs, w);
  ASSERT_EQ(r.status, AdjustStatus::adjusted);
  for (int i = 0; i < n; ++i) {
    EXPECT_NEAR(r.adjusted(i, 0), c[0], 1e-4);
    EXPECT_NEAR(r.adjusted(i, 1), c[1], 1e-4);
  }
  EXPECT_NEAR(r.coefficients(1, 0), 3.0, 1e-6);
}

TEST(Regression, ConstantSummariesLeaveValuesUnchanged) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Constant(10, 2, 3.0);
  Eigen::MatrixXd theta = Eigen::MatrixXd::Random(10, 2);
  const auto r = local_linear_adjust(theta, s, Eigen::Vector2d(3.0, 3.0), Eigen::VectorXd::Ones(10));
  EXPECT_EQ(r.status, AdjustStatus::no_variation);
  EXPECT_EQ(r.adjusted, theta);
}

TEST(Regression, TooFewRowsIsSingular) {
  Eigen::MatrixXd s(3, 2);
  s << 1, 2, 3, 5, 4, 1;
  Eigen::MatrixXd theta = Eigen::MatrixXd::Random(3, 1);
  const auto r = local_linear_adjust(theta, s, Eigen::Vector2d(2, 2), Eigen::VectorXd::Ones(3));
  EXPECT_EQ(r.status, AdjustStatus::singular);
  EXPECT_EQ(r.adjusted, theta);
}

TEST(Finalize, DropsNegativeRowsAndRenormalises) {
  std::vector<AdjustedRow> rows(3);
  rows[0].probs = {0.2, 0.3, 0.6};
  rows[0].gamma = 0.5;
  rows[1].probs = {-0.01, 0.5, 0.51};
  rows[1].gamma = 0.5;
  rows[2].probs = {0.1, 0.1, 0.8};
  rows[2].gamma = 0.25;
  const auto out = finalize_adjusted(2, rows, AdjustStatus::adjusted, ControlLaw::binomial_xi(0.5));
  EXPECT_EQ(out.rejected_count, 1u);
  ASSERT_EQ(out.rows.size(), 2u);
  EXPECT_NEAR(out.rows[0].raw_sum, 1.1, 1e-12);
  EXPECT_NEAR(out.rows[0].probs[2], 0.6 / 1.1, 1e-12);
  EXPECT_NEAR(out.rows[1].m, 1.7, 1e-12);
  EXPECT_NEAR(out.rows[1].derived, 0.25 * 1.7, 1e-12);
  EXPECT_EQ(out.derived_name, "tau_m");
}

TEST(Derived, VerhulstEquilibrium) {
  const auto family = ControlLaw::density_dependent(GrowthFamily::verhulst, 0.0, 1.0);
  EXPECT_NEAR(derived_quantity(family, 2.0, 1000.0), 500.0, 1e-9);
  EXPECT_NEAR(derived_quantity(ControlLaw::binomial_xi(0.8), 3.6, 0.8), 2.88, 1e-12);
}

TEST(Kde, StandardNormal) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z(0.0, 1.0);
  const int n = 20000;
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) {
    x[i] = z(rng);
  }
  const auto d = kde(x, Eigen::VectorXd::Ones(n), 512);
  EXPECT_NEAR(d.integral(), 1.0, 0.02);
  EXPECT_NEAR(d.mean(), x.mean(), 0.02);
  Eigen::Index at0 = 0;
  (d.grid.array().abs()).minCoeff(&at0);
  EXPECT_NEAR(d.density[at0], 1.0 / std::sqrt(2.0 * M_PI), 0.03);
  const auto h = hpd(d, 0.95);
  EXPECT_NEAR(h.lo, -1.96, 0.1);
  EXPECT_NEAR(h.hi, 1.96, 0.1);
  EXPECT_FALSE(h.disconnected);
  EXPECT_GE(h.mass, 0.95);
}

TEST(Kde, WeightsShiftTheMass) {
  Eigen::VectorXd x(4);
  x << 0.0, 0.1, 5.0, 5.1;
  Eigen::VectorXd w(4);
  w << 1.0, 1.0, 0.0, 0.0;
  const auto d = kde(x, w, 256);
  EXPECT_NEAR(d.mean(), 0.05, 0.05);
  EXPECT_EQ(effective_sample_size(w), 2.0);
}

TEST(Hpd, BimodalIsDisconnected) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> z(0.0, 0.3);
  const int n = 4000;
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) {
    x[i] = z(rng) + (i % 2 == 0 ? -4.0 : 4.0);
  }
  const auto h = hpd(kde(x, Eigen::VectorXd::Ones(n), 512), 0.9);
  EXPECT_TRUE(h.disconnected);
}

TEST(Kde2d, IntegratesToOne) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> z(0.0, 1.0);
  const int n = 3000;
  Eigen::VectorXd x(n);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    x[i] = z(rng);
    y[i] = 2.0 * z(rng) + 1.0;
  }
  const auto g = kde2d(x, y, Eigen::VectorXd::Ones(n), 64);
  const double dx = g.x[1] - g.x[0];
  const double dy = g.y[1] - g.y[0];
  EXPECT_NEAR(g.density.sum() * dx * dy, 1.0, 0.03);
}

TEST(Select, KeepsClosestOfTheChosenModel) {
  ObservedSample obs;
  obs.sizes = {1, 2, 4, 8};
  obs.last_progenitors = 3;
  const auto mask = ObservationMask::from(obs);
  const auto target = summary(obs, mask);
  std::vector<Particle> ps;
  ps.push_back(particle_with_path(3, {1, 2, 4, 8}, 3, 5));
  ps.push_back(particle_with_path(3, {1, 3, 4, 9}, 3, 1));
  ps.push_back(particle_with_path(3, {1, 9, 20, 40}, 12, 2));
  ps.push_back(particle_with_path(4, {1, 2, 4, 8}, 3, 0));
  ps.push_back(particle_with_path(3, {1, 2, 4, 8}, 3, 4));
  const auto sel = select_and_reject(ps, 3, 0.5, mask, target, 2);
  EXPECT_EQ(sel.candidates, 4u);
  ASSERT_EQ(sel.particles.size(), 2u);
  EXPECT_EQ(sel.particles[0].task, 4u);
  EXPECT_EQ(sel.particles[1].task, 5u);
  EXPECT_EQ(sel.epsilon, 0.0);
  EXPECT_THROW(select_and_reject(ps, 3, 0.5, mask, target, 5), InsufficientParticles);
  EXPECT_THROW(select_and_reject(ps, 3, 0.0, mask, target, 1), ConfigError);
  EXPECT_EQ(select_and_reject(ps, 3, 0.01, mask, target, 1).particles.size(), 1u);
}

TEST(Select, StageTwoSourceNames) {
  EXPECT_EQ(to_string(StageTwoSource::pool), "pool");
  EXPECT_EQ(stage_two_source_from_string("population"), StageTwoSource::population);
  EXPECT_THROW(stage_two_source_from_string("bogus"), ConfigError);
}
