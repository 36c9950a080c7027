#include "cbp/abc.hpp"

namespace cbp {

ObservationMask ObservationMask::from(const ObservedSample& obs) {
  ObservationMask mask;
  for (std::size_t i = 0; i < obs.sizes.size(); ++i) {
    if (obs.sizes[i] && *obs.sizes[i] > 0) {
      mask.indices.push_back(static_cast<int>(i));
    }
  }
  mask.use_progenitors = obs.last_progenitors.has_value() && *obs.last_progenitors > 0;
  const auto n = obs.sizes.size() - 1;
  mask.full_summary = mask.use_progenitors && n >= 1 && obs.sizes[n - 1].value_or(0) > 0 && obs.sizes[n].has_value();
  return mask;
}

DiscrepancyVector raw_vector(const ObservedSample& obs, const ObservationMask& mask) {
  DiscrepancyVector v{Eigen::ArrayXd(static_cast<Eigen::Index>(mask.dimension()))};
  Eigen::Index k = 0;
  for (int i : mask.indices) {
    v.values[k++] = static_cast<double>(*obs.sizes[static_cast<std::size_t>(i)]);
  }
  if (mask.use_progenitors) {
    v.values[k] = static_cast<double>(*obs.last_progenitors);
  }
  return v;
}

std::optional<DiscrepancyVector> raw_vector(const Trajectory& t, const ObservationMask& mask) {
  DiscrepancyVector v{Eigen::ArrayXd(static_cast<Eigen::Index>(mask.dimension()))};
  Eigen::Index k = 0;
  for (int i : mask.indices) {
    const Count z = t.sizes.at(static_cast<std::size_t>(i));
    if (z <= 0) {
      return std::nullopt;
    }
    v.values[k++] = static_cast<double>(z);
  }
  if (mask.use_progenitors) {
    if (!t.last_progenitors || *t.last_progenitors <= 0) {
      return std::nullopt;
    }
    v.values[k] = static_cast<double>(*t.last_progenitors);
  }
  return v;
}

double raw_distance(const DiscrepancyVector& observed, const Trajectory& t, const ObservationMask& mask) {
  // Hot path: same arithmetic as rho() without the temporary vector.
  double acc = 0.0;
  Eigen::Index k = 0;
  for (int i : mask.indices) {
    const Count z = t.sizes[static_cast<std::size_t>(i)];
    if (z <= 0) {
      return kIncomparable;
    }
    const double x = static_cast<double>(z);
    const double y = observed.values[k++];
    const double d = x / y - y / x;
    acc += d * d;
  }
  if (mask.use_progenitors) {
    if (!t.last_progenitors || *t.last_progenitors <= 0) {
      return kIncomparable;
    }
    const double x = static_cast<double>(*t.last_progenitors);
    const double y = observed.values[k];
    const double d = x / y - y / x;
    acc += d * d;
  }
  return std::sqrt(acc);
}

Eigen::VectorXd SummaryStatistic::vector() const {
  if (reduced) {
    return Eigen::Vector2d(total, growth_ratio);
  }
  return Eigen::Vector4d(total, growth_ratio, progenitor_fraction, mean_ratio);
}

SummaryStatistic SummaryStatistic::from_vector(const Eigen::VectorXd& v) {
  SummaryStatistic s;
  if (v.size() == 2) {
    s.reduced = true;
    s.total = v[0];
    s.growth_ratio = v[1];
    return s;
  }
  if (v.size() != 4) {
    throw LengthMismatch("summary vectors have 2 or 4 coordinates");
  }
  s.total = v[0];
  s.growth_ratio = v[1];
  s.progenitor_fraction = v[2];
  s.mean_ratio = v[3];
  return s;
}

namespace {

template <typename SizeAt>
SummaryStatistic summary_impl(SizeAt size_at, int n, const std::vector<int>& indices, std::optional<Count> phi,
                              bool use_progenitors) {
  SummaryStatistic s;
  double upper = 0.0;  // sum over observed i in 1..n
  double lower = 0.0;  // sum over observed i in 0..n-1
  for (int i : indices) {
    const double z = static_cast<double>(size_at(i));
    if (i >= 1) {
      upper += z;
    }
    if (i <= n - 1) {
      lower += z;
    }
  }
  if (lower <= 0.0) {
    throw DivisionByZero("summary: empty denominator in the growth ratio");
  }
  s.total = upper;
  s.growth_ratio = upper / lower;
  if (!use_progenitors) {
    s.reduced = true;
    return s;
  }
  const double zn1 = static_cast<double>(size_at(n - 1));
  const double zn = static_cast<double>(size_at(n));
  if (!phi || *phi <= 0 || zn1 <= 0.0) {
    throw DivisionByZero("summary: phi_{n-1} or Z_{n-1} is zero");
  }
  s.progenitor_fraction = static_cast<double>(*phi) / zn1;
  s.mean_ratio = zn / static_cast<double>(*phi);
  return s;
}

} // namespace

SummaryStatistic summary(const ObservedSample& obs, const ObservationMask& mask) {
  return summary_impl([&](int i) { return obs.sizes[static_cast<std::size_t>(i)].value_or(0); }, obs.generations(),
                      mask.indices, obs.last_progenitors, mask.full_summary);
}

SummaryStatistic summary(const Trajectory& t, const ObservationMask& mask) {
  return summary_impl([&](int i) { return t.sizes[static_cast<std::size_t>(i)]; }, t.generations(), mask.indices,
                      t.last_progenitors, mask.full_summary);
}

SummaryStatistic summary(const Trajectory& t) {
  ObservationMask mask;
  for (int i = 0; i <= t.generations(); ++i) {
    mask.indices.push_back(i);
  }
  mask.use_progenitors = t.last_progenitors.has_value();
  mask.full_summary = mask.use_progenitors;
  return summary(t, mask);
}

double summary_distance(const SummaryStatistic& a, const SummaryStatistic& b) {
  const Eigen::ArrayXd x = a.vector().array();
  const Eigen::ArrayXd y = b.vector().array();
  if (x.size() != y.size()) {
    throw LengthMismatch("summary_distance: summaries differ in dimension");
  }
  if ((x <= 0).any() || (y <= 0).any()) {
    return kIncomparable;
  }
  return rho(x, y);
}

} // namespace cbp
