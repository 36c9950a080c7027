#include "cbp/abc.hpp"
#include "cbp/io.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>
#include <string>

using namespace cbp;

namespace {

// Plain reading of the fixture, independent of the library parser.
std::vector<long long> read_column(const std::string& path, long long& phi) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  std::vector<long long> values;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    const std::string key = line.substr(0, comma);
    const long long v = std::stoll(line.substr(comma + 1));
    if (key == "phi") {
      phi = v;
    } else {
      values.push_back(v);
    }
  }
  return values;
}

Eigen::ArrayXd random_positive(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  Eigen::ArrayXd v(n);
  for (int i = 0; i < n; ++i) {
    v[i] = std::exp(u(rng));
  }
  return v;
}

} // namespace

TEST(Rho, SymmetryIdentityAndScaleInvariance) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> scale(-4.0, 4.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 1 + trial % 12;
    const Eigen::ArrayXd x = random_positive(rng, n);
    const Eigen::ArrayXd y = random_positive(rng, n);
    const double c = std::exp(scale(rng));
    const double d = rho(x, y);
    EXPECT_EQ(d, rho(y, x));
    EXPECT_EQ(rho(x, x), 0.0);
    EXPECT_NEAR(rho(Eigen::ArrayXd(c * x), Eigen::ArrayXd(c * y)), d, 1e-12 * (1.0 + d));
  }
}

TEST(Rho, RejectsBadInput) {
  Eigen::ArrayXd a(2);
  a << 1.0, 2.0;
  Eigen::ArrayXd b(3);
  b << 1.0, 2.0, 3.0;
  Eigen::ArrayXd z(2);
  z << 1.0, 0.0;
  EXPECT_THROW(rho(a, b), LengthMismatch);
  EXPECT_THROW(rho(a, z), NonPositiveEntry);
}

TEST(Rho, KnownValue) {
  Eigen::ArrayXd x(2);
  x << 1.0, 2.0;
  Eigen::ArrayXd y(2);
  y << 2.0, 2.0;
  // (0.5 - 2)^2 + 0 = 2.25
  EXPECT_DOUBLE_EQ(rho(x, y), 1.5);
}

TEST(Summary, ExampleTwoMatchesDirectSums) {
  long long phi = 0;
  const auto z = read_column(std::string(CBP_DATA_DIR) + "/example2.csv", phi);
  ASSERT_EQ(z.size(), 31u);
  double upper = 0.0;
  double lower = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (i >= 1) {
      upper += static_cast<double>(z[i]);
    }
    if (i + 1 < z.size()) {
      lower += static_cast<double>(z[i]);
    }
  }
  const auto obs = load_observations(std::string(CBP_DATA_DIR) + "/example2.csv");
  const auto s = summary(obs, ObservationMask::from(obs));
  ASSERT_FALSE(s.reduced);
  EXPECT_DOUBLE_EQ(s.total, upper);
  EXPECT_DOUBLE_EQ(s.growth_ratio, upper / lower);
  EXPECT_DOUBLE_EQ(s.progenitor_fraction, static_cast<double>(phi) / static_cast<double>(z[29]));
  EXPECT_DOUBLE_EQ(s.mean_ratio, static_cast<double>(z[30]) / static_cast<double>(phi));
  EXPECT_DOUBLE_EQ(s.total, 1215.0);
  EXPECT_DOUBLE_EQ(s.growth_ratio, 1.215);
  EXPECT_DOUBLE_EQ(s.progenitor_fraction, 131.0 / 166.0);
  EXPECT_DOUBLE_EQ(s.mean_ratio, 216.0 / 131.0);
}

TEST(Summary, ReducedWithoutProgenitors) {
  ObservedSample obs;
  obs.sizes = {1, 3, 5, 9};
  const auto mask = ObservationMask::from(obs);
  EXPECT_FALSE(mask.use_progenitors);
  const auto s = summary(obs, mask);
  EXPECT_TRUE(s.reduced);
  EXPECT_EQ(s.dimension(), 2);
  EXPECT_DOUBLE_EQ(s.total, 17.0);
  EXPECT_DOUBLE_EQ(s.growth_ratio, 17.0 / 9.0);
}

TEST(Mask, SkipsMissingAndZeroGenerations) {
  ObservedSample obs;
  obs.sizes = {1, std::nullopt, 4, 7};
  obs.last_progenitors = 3;
  const auto mask = ObservationMask::from(obs);
  EXPECT_EQ(mask.indices, (std::vector<int>{0, 2, 3}));
  EXPECT_TRUE(mask.use_progenitors);
  EXPECT_TRUE(mask.full_summary);
  EXPECT_EQ(mask.dimension(), 4u);

  Trajectory t;
  t.sizes = {1, 0, 4, 7};
  t.last_progenitors = 3;
  const auto observed = raw_vector(obs, mask);
  EXPECT_EQ(raw_distance(observed, t, mask), 0.0);
  t.sizes[2] = 0;
  EXPECT_EQ(raw_distance(observed, t, mask), kIncomparable);
  EXPECT_FALSE(raw_vector(t, mask).has_value());
}

TEST(Mask, RawDistanceAgreesWithRho) {
  ObservedSample obs;
  obs.sizes = {1, 2, 5, 11};
  obs.last_progenitors = 4;
  const auto mask = ObservationMask::from(obs);
  Trajectory t;
  t.sizes = {1, 3, 4, 13};
  t.last_progenitors = 5;
  const auto x = raw_vector(t, mask);
  ASSERT_TRUE(x);
  EXPECT_NEAR(raw_distance(raw_vector(obs, mask), t, mask), rho(*x, raw_vector(obs, mask)), 1e-15);
}

TEST(Summary, DistanceInfiniteOnNonPositive) {
  SummaryStatistic a;
  a.total = 10;
  a.growth_ratio = 1.1;
  a.reduced = true;
  SummaryStatistic b = a;
  EXPECT_EQ(summary_distance(a, b), 0.0);
  b.total = 0.0;
  EXPECT_EQ(summary_distance(a, b), kIncomparable);
}
