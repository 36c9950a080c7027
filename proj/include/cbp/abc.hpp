#pragma once

#include "cbp/errors.hpp"
#include "cbp/simulate.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

namespace cbp {

/// Coordinates compared between an observed sample and a simulation.
/// All entries are strictly positive.
struct DiscrepancyVector {
  Eigen::ArrayXd values;
};

inline constexpr double kIncomparable = std::numeric_limits<double>::infinity();

/// rho(x, y) = || x/y - y/x ||_2 with coordinate-wise division.
template <typename DerivedX, typename DerivedY>
typename DerivedX::Scalar rho(const Eigen::ArrayBase<DerivedX>& x, const Eigen::ArrayBase<DerivedY>& y) {
  if (x.size() != y.size()) {
    throw LengthMismatch("rho: vectors differ in length");
  }
  if ((x <= 0).any() || (y <= 0).any()) {
    throw NonPositiveEntry("rho: entries must be strictly positive");
  }
  return (x / y - y / x).matrix().norm();
}

inline double rho(const DiscrepancyVector& x, const DiscrepancyVector& y) {
  return rho(x.values, y.values);
}

/// Which generations of the observation take part in the raw-data comparison:
/// observed and strictly positive sizes, plus phi_{n-1} when it is observed.
struct ObservationMask {
  std::vector<int> indices;
  bool use_progenitors = false;
  // The four-coordinate summary also needs Z_{n-1} and Z_n observed.
  bool full_summary = false;

  static ObservationMask from(const ObservedSample& obs);
  std::size_t dimension() const { return indices.size() + (use_progenitors ? 1 : 0); }
};

DiscrepancyVector raw_vector(const ObservedSample& obs, const ObservationMask& mask);

/// Raw vector of a simulated path under an observation mask. Returns
/// std::nullopt when any masked coordinate is zero (incomparable pair).
std::optional<DiscrepancyVector> raw_vector(const Trajectory& t, const ObservationMask& mask);

/// rho between the observed raw vector and a simulated path; +infinity when
/// the pair is incomparable.
double raw_distance(const DiscrepancyVector& observed, const Trajectory& t, const ObservationMask& mask);

/// Four-coordinate summary (total, growth ratio, progenitor fraction, mean
/// ratio), or the reduced two-coordinate form when phi is unobserved.
struct SummaryStatistic {
  double total = 0.0;
  double growth_ratio = 0.0;
  double progenitor_fraction = 0.0;
  double mean_ratio = 0.0;
  bool reduced = false;

  int dimension() const { return reduced ? 2 : 4; }
  Eigen::VectorXd vector() const;
  static SummaryStatistic from_vector(const Eigen::VectorXd& v);
};

/// Summary restricted to the mask's generations. Throws DivisionByZero for
/// degenerate paths (zero denominators).
SummaryStatistic summary(const ObservedSample& obs, const ObservationMask& mask);
SummaryStatistic summary(const Trajectory& t, const ObservationMask& mask);
SummaryStatistic summary(const Trajectory& t);

/// rho between two summaries; +infinity if any coordinate is non-positive.
double summary_distance(const SummaryStatistic& a, const SummaryStatistic& b);

} // namespace cbp
