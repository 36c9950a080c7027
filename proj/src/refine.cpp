#include "cbp/refine.hpp"

#include "cbp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

namespace cbp {

std::string to_string(AdjustStatus s) {
  switch (s) {
  case AdjustStatus::adjusted:
    return "adjusted";
  case AdjustStatus::no_variation:
    return "no_variation";
  case AdjustStatus::singular:
    return "singular";
  }
  return "unknown";
}

std::string to_string(StageTwoSource s) {
  return s == StageTwoSource::pool ? "pool" : "population";
}

StageTwoSource stage_two_source_from_string(const std::string& name) {
  if (name == "population") {
    return StageTwoSource::population;
  }
  if (name == "pool") {
    return StageTwoSource::pool;
  }
  throw ConfigError("stage-2 source must be 'population' or 'pool'");
}

SelectedSet select_and_reject(const std::vector<Particle>& particles, int kappa_hat, double keep_fraction,
                              const ObservationMask& mask, const SummaryStatistic& observed,
                              std::size_t min_particles) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw ConfigError("keep_fraction must lie in (0,1]");
  }
  struct Entry {
    const Particle* particle;
    SummaryStatistic summary;
    double distance;
  };
  std::vector<Entry> entries;
  for (const auto& p : particles) {
    if (p.kappa != kappa_hat) {
      continue;
    }
    SummaryStatistic s = summary(p.trajectory, mask);
    entries.push_back({&p, s, summary_distance(s, observed)});
  }
  if (entries.size() < min_particles) {
    std::ostringstream os;
    os << "only " << entries.size() << " particles have kappa=" << kappa_hat << " (need at least " << min_particles
       << "); increase the particle count";
    throw InsufficientParticles(os.str());
  }
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.distance != b.distance) {
      return a.distance < b.distance;
    }
    return a.particle->task < b.particle->task;
  });
  const auto keep = static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(entries.size()) - 1e-9));

  SelectedSet out;
  out.candidates = entries.size();
  for (std::size_t i = 0; i < std::max<std::size_t>(keep, 1) && i < entries.size(); ++i) {
    out.particles.push_back(*entries[i].particle);
    out.summaries.push_back(entries[i].summary);
    out.distances.push_back(entries[i].distance);
  }
  out.epsilon = out.distances.back();
  return out;
}

LinearAdjustment local_linear_adjust(const Eigen::MatrixXd& params, const Eigen::MatrixXd& summaries,
                                     const Eigen::VectorXd& observed, const Eigen::VectorXd& weights) {
  const Eigen::Index n = params.rows();
  if (summaries.rows() != n || weights.size() != n || summaries.cols() != observed.size()) {
    throw LengthMismatch("local_linear_adjust: inconsistent dimensions");
  }
  LinearAdjustment out;
  out.adjusted = params;
  out.coefficients = Eigen::MatrixXd::Zero(summaries.cols(), params.cols());

  const Eigen::MatrixXd centred = summaries.rowwise() - observed.transpose();
  std::vector<Eigen::Index> active;
  for (Eigen::Index j = 0; j < centred.cols(); ++j) {
    if ((centred.col(j).array() != centred(0, j)).any()) {
      active.push_back(j);
    }
  }
  if (active.empty()) {
    out.status = AdjustStatus::no_variation;
    return out;
  }
  const auto p = static_cast<Eigen::Index>(active.size());
  const Eigen::Index positive = (weights.array() > 0.0).count();
  if (positive < p + 2) {
    out.status = AdjustStatus::singular;
    return out;
  }

  // Scale regressors to unit spread so the rank test is meaningful when
  // coordinates differ by orders of magnitude.
  Eigen::MatrixXd design(n, p + 1);
  Eigen::VectorXd scale(p);
  design.col(0).setOnes();
  for (Eigen::Index k = 0; k < p; ++k) {
    const auto col = centred.col(active[static_cast<std::size_t>(k)]);
    scale[k] = col.cwiseAbs().maxCoeff();
    design.col(k + 1) = col / scale[k];
  }
  const Eigen::VectorXd root_w = weights.cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd wx = root_w.asDiagonal() * design;
  const Eigen::MatrixXd wy = root_w.asDiagonal() * params;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(wx);
  qr.setThreshold(1e-10);
  if (qr.rank() < p + 1) {
    out.status = AdjustStatus::singular;
    return out;
  }
  const Eigen::MatrixXd beta = qr.solve(wy);  // (p+1) x params
  const Eigen::MatrixXd slopes = beta.bottomRows(p);
  out.adjusted = params - design.rightCols(p) * slopes;
  for (Eigen::Index k = 0; k < p; ++k) {
    out.coefficients.row(active[static_cast<std::size_t>(k)]) = slopes.row(k) / scale[k];
  }
  out.status = AdjustStatus::adjusted;
  return out;
}

double derived_quantity(const ControlLaw& family, double m, double gamma) {
  if (const auto* d = std::get_if<DensityDependent>(&family.variant())) {
    return equilibrium(d->family, d->shape, m, gamma);
  }
  return gamma * m;  // tau(gamma) = gamma
}

AdjustedSample finalize_adjusted(int kappa, std::vector<AdjustedRow> rows, AdjustStatus status,
                                 const ControlLaw& family) {
  AdjustedSample out;
  out.kappa = kappa;
  out.status = status;
  out.derived_name = family.is_density_dependent() ? "k_e" : "tau_m";
  for (auto& row : rows) {
    if (std::any_of(row.probs.begin(), row.probs.end(), [](double p) { return p < 0.0; })) {
      ++out.rejected_count;
      continue;
    }
    const double sum = std::accumulate(row.probs.begin(), row.probs.end(), 0.0);
    if (!(sum > 0.0)) {
      ++out.rejected_count;
      continue;
    }
    row.raw_sum = sum;
    for (double& p : row.probs) {
      p /= sum;
    }
    row.m = 0.0;
    for (std::size_t j = 1; j < row.probs.size(); ++j) {
      row.m += static_cast<double>(j) * row.probs[j];
    }
    row.derived = derived_quantity(family, row.m, row.gamma);
    out.rows.push_back(std::move(row));
  }
  return out;
}

AdjustedSample regression_adjust(const SelectedSet& selected, const SummaryStatistic& observed,
                                 const ControlLaw& family) {
  const auto n = static_cast<Eigen::Index>(selected.particles.size());
  if (n == 0) {
    throw InsufficientParticles("regression adjustment of an empty sample");
  }
  const int kappa = selected.particles.front().kappa;
  const auto cells = static_cast<Eigen::Index>(kappa) + 1;
  const Eigen::VectorXd obs = observed.vector();

  Eigen::MatrixXd params(n, cells + 1);
  Eigen::MatrixXd summaries(n, obs.size());
  Eigen::VectorXd weights(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = selected.particles[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < cells; ++j) {
      params(i, j) = p.probs[static_cast<std::size_t>(j)];
    }
    params(i, cells) = p.gamma;
    summaries.row(i) = selected.summaries[static_cast<std::size_t>(i)].vector().transpose();
    const double d = selected.distances[static_cast<std::size_t>(i)];
    const double kernel = selected.epsilon > 0.0 ? 1.0 - (d / selected.epsilon) * (d / selected.epsilon) : 1.0;
    weights[i] = std::max(kernel, 0.0) * p.weight;
  }
  if (!(weights.sum() > 0.0)) {
    // Every retained particle sits on the kernel boundary; fall back to the
    // importance weights alone.
    for (Eigen::Index i = 0; i < n; ++i) {
      weights[i] = selected.particles[static_cast<std::size_t>(i)].weight;
    }
  }

  const LinearAdjustment adj = local_linear_adjust(params, summaries, obs, weights);
  std::vector<AdjustedRow> rows;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(weights[i] > 0.0)) {
      continue;
    }
    AdjustedRow row;
    row.probs.resize(static_cast<std::size_t>(cells));
    for (Eigen::Index j = 0; j < cells; ++j) {
      row.probs[static_cast<std::size_t>(j)] = adj.adjusted(i, j);
    }
    row.gamma = adj.adjusted(i, cells);
    row.weight = weights[i];
    rows.push_back(std::move(row));
  }
  return finalize_adjusted(kappa, std::move(rows), adj.status, family);
}

// ---------------------------------------------------------------------------

double DensityEstimate::integral() const {
  double acc = 0.0;
  for (Eigen::Index i = 1; i < grid.size(); ++i) {
    acc += 0.5 * (density[i] + density[i - 1]) * (grid[i] - grid[i - 1]);
  }
  return acc;
}

double DensityEstimate::mean() const {
  double acc = 0.0;
  double mass = 0.0;
  for (Eigen::Index i = 1; i < grid.size(); ++i) {
    const double dx = grid[i] - grid[i - 1];
    acc += 0.5 * (density[i] * grid[i] + density[i - 1] * grid[i - 1]) * dx;
    mass += 0.5 * (density[i] + density[i - 1]) * dx;
  }
  return acc / mass;
}

double effective_sample_size(const Eigen::VectorXd& weights) {
  const double s = weights.sum();
  const double s2 = weights.squaredNorm();
  return s2 > 0.0 ? s * s / s2 : 0.0;
}

namespace {

struct WeightedMoments {
  double mean;
  double sd;
  double n_eff;
};

WeightedMoments weighted_moments(const Eigen::VectorXd& values, const Eigen::VectorXd& weights) {
  const double total = weights.sum();
  const double mean = weights.dot(values) / total;
  const double var = weights.dot((values.array() - mean).square().matrix()) / total;
  return {mean, std::sqrt(var), effective_sample_size(weights)};
}

void check_kde_input(const Eigen::VectorXd& values, const Eigen::VectorXd& weights) {
  if (values.size() != weights.size()) {
    throw LengthMismatch("kde: values and weights differ in length");
  }
  if ((weights.array() < 0.0).any() || !(weights.sum() > 0.0)) {
    throw DegenerateSample("kde: weights must be non-negative with a positive sum");
  }
  std::set<double> distinct;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (weights[i] > 0.0) {
      distinct.insert(values[i]);
    }
  }
  if (distinct.size() < 2 || effective_sample_size(weights) < 1.0 + 1e-9) {
    throw DegenerateSample("kde: need at least two distinct values carrying weight");
  }
}

constexpr double kInvSqrt2Pi = 0.3989422804014327;

} // namespace

DensityEstimate kde(const Eigen::VectorXd& values, const Eigen::VectorXd& weights, int grid_size) {
  check_kde_input(values, weights);
  if (grid_size < 2) {
    throw ConfigError("kde grid needs at least 2 points");
  }
  const auto mom = weighted_moments(values, weights);
  DensityEstimate out;
  out.bandwidth = 1.06 * mom.sd * std::pow(mom.n_eff, -0.2);
  const double lo = values.minCoeff() - 3.0 * out.bandwidth;
  const double hi = values.maxCoeff() + 3.0 * out.bandwidth;
  out.grid = Eigen::VectorXd::LinSpaced(grid_size, lo, hi);
  const Eigen::ArrayXd w = (weights / weights.sum()).array();
  out.density.resize(grid_size);
  for (int g = 0; g < grid_size; ++g) {
    const Eigen::ArrayXd z = (out.grid[g] - values.array()) / out.bandwidth;
    out.density[g] = (w * (-0.5 * z.square()).exp()).sum() * kInvSqrt2Pi / out.bandwidth;
  }
  return out;
}

HpdInterval hpd(const DensityEstimate& density, double level) {
  const Eigen::Index n = density.grid.size();
  if (n < 2) {
    throw DegenerateSample("hpd: density grid too small");
  }
  // Cell masses with trapezoid weights (half cells at the ends).
  Eigen::VectorXd mass(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double left = i > 0 ? density.grid[i] - density.grid[i - 1] : 0.0;
    const double right = i + 1 < n ? density.grid[i + 1] - density.grid[i] : 0.0;
    mass[i] = density.density[i] * 0.5 * (left + right);
  }
  const double total = mass.sum();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) { return density.density[a] > density.density[b]; });

  std::vector<bool> inside(static_cast<std::size_t>(n), false);
  double acc = 0.0;
  for (Eigen::Index idx : order) {
    inside[static_cast<std::size_t>(idx)] = true;
    acc += mass[idx];
    if (acc >= level * total) {
      break;
    }
  }
  Eigen::Index first = n;
  Eigen::Index last = -1;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (inside[static_cast<std::size_t>(i)]) {
      first = std::min(first, i);
      last = std::max(last, i);
    }
  }
  HpdInterval out;
  out.level = level;
  out.lo = density.grid[first];
  out.hi = density.grid[last];
  if (last == first) {
    out.lo = density.grid[std::max<Eigen::Index>(first - 1, 0)];
    out.hi = density.grid[std::min(last + 1, n - 1)];
  }
  for (Eigen::Index i = first; i <= last; ++i) {
    if (!inside[static_cast<std::size_t>(i)]) {
      out.disconnected = true;
    }
  }
  double enclosed = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (density.grid[i] >= out.lo && density.grid[i] <= out.hi) {
      enclosed += mass[i];
    }
  }
  out.mass = enclosed / total;
  return out;
}

DensityGrid2D kde2d(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& weights, int grid_size) {
  check_kde_input(x, weights);
  check_kde_input(y, weights);
  const auto mx = weighted_moments(x, weights);
  const auto my = weighted_moments(y, weights);
  const double shrink = std::pow(mx.n_eff, -1.0 / 6.0);
  const double hx = mx.sd * shrink;
  const double hy = my.sd * shrink;
  DensityGrid2D out;
  out.x = Eigen::VectorXd::LinSpaced(grid_size, x.minCoeff() - 3.0 * hx, x.maxCoeff() + 3.0 * hx);
  out.y = Eigen::VectorXd::LinSpaced(grid_size, y.minCoeff() - 3.0 * hy, y.maxCoeff() + 3.0 * hy);
  const Eigen::ArrayXd w = (weights / weights.sum()).array();
  // Kernel matrices: kx(i, s) = phi((x_i - X_s) / hx) / hx
  Eigen::MatrixXd kx(grid_size, x.size());
  Eigen::MatrixXd ky(grid_size, y.size());
  for (int g = 0; g < grid_size; ++g) {
    kx.row(g) = ((-0.5 * ((out.x[g] - x.array()) / hx).square()).exp() * kInvSqrt2Pi / hx).matrix().transpose();
    ky.row(g) = ((-0.5 * ((out.y[g] - y.array()) / hy).square()).exp() * kInvSqrt2Pi / hy).matrix().transpose();
  }
  out.density = kx * w.matrix().asDiagonal() * ky.transpose();
  return out;
}

const ParameterPosterior& PosteriorSummary::get(const std::string& name) const {
  for (const auto& p : parameters) {
    if (p.name == name) {
      return p;
    }
  }
  throw DomainError("posterior summary has no parameter '" + name + "'");
}

PosteriorSummary derived_posteriors(const AdjustedSample& adjusted, const ControlLaw& family,
                                    const PosteriorOptions& options) {
  const auto n = static_cast<Eigen::Index>(adjusted.rows.size());
  if (n == 0) {
    throw DegenerateSample("no adjusted rows left to summarise");
  }
  Eigen::VectorXd m(n), gamma(n), derived(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = adjusted.rows[static_cast<std::size_t>(i)];
    m[i] = r.m;
    gamma[i] = r.gamma;
    derived[i] = derived_quantity(family, r.m, r.gamma);
    w[i] = r.weight;
  }
  PosteriorSummary out;
  out.kappa = adjusted.kappa;
  out.mean_probs.assign(static_cast<std::size_t>(adjusted.kappa) + 1, 0.0);
  const double total = w.sum();
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = adjusted.rows[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < r.probs.size(); ++j) {
      out.mean_probs[j] += w[i] * r.probs[j] / total;
    }
  }

  const std::string control_name = family.is_density_dependent() ? "k" : "gamma";
  const std::pair<std::string, const Eigen::VectorXd*> columns[] = {
      {"m", &m}, {control_name, &gamma}, {adjusted.derived_name, &derived}};
  for (const auto& [name, values] : columns) {
    ParameterPosterior p;
    p.name = name;
    p.mean = w.dot(*values) / total;
    p.density = kde(*values, w, options.grid_size);
    p.interval = hpd(p.density, options.level);
    out.parameters.push_back(std::move(p));
  }
  out.joint_m_gamma = kde2d(m, gamma, w, options.grid_size_2d);
  if (family.is_density_dependent()) {
    out.joint_m_derived = kde2d(m, derived, w, options.grid_size_2d);
  }
  return out;
}

} // namespace cbp
