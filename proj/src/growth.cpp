#include "cbp/growth.hpp"

#include "cbp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <sstream>
#include <tuple>

namespace cbp {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

double parse_shape(const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size() || !(v > 0.0) || !std::isfinite(v)) {
    throw ConfigError("invalid shape value '" + text + "' in growth family list");
  }
  return v;
}

} // namespace

std::string GrowthCandidate::label() const {
  if (!has_shape(family)) {
    return to_string(family);
  }
  std::ostringstream os;
  os << to_string(family) << ':' << shape;
  return os.str();
}

ControlLaw GrowthCandidate::control(double capacity) const {
  return ControlLaw::density_dependent(family, shape, capacity);
}

std::vector<double> default_shape_grid(GrowthFamily family) {
  switch (family) {
  case GrowthFamily::theta_logistic:
    return {0.25, 0.5, 0.55, 1.0, 1.5, 2.0, 3.0};
  case GrowthFamily::hassell:
    return {0.05, 0.25, 0.5, 1.0, 1.25, 2.0};
  default:
    return {0.0};
  }
}

std::vector<GrowthCandidate> default_growth_grid() {
  std::vector<GrowthCandidate> grid{{GrowthFamily::verhulst, 0.0}};
  for (double t : default_shape_grid(GrowthFamily::theta_logistic)) {
    grid.push_back({GrowthFamily::theta_logistic, t});
  }
  for (double b : default_shape_grid(GrowthFamily::hassell)) {
    grid.push_back({GrowthFamily::hassell, b});
  }
  grid.push_back({GrowthFamily::gompertz, 0.0});
  return grid;
}

std::vector<GrowthCandidate> parse_growth_candidates(const std::string& spec) {
  std::vector<GrowthCandidate> out;
  std::stringstream ss(spec);
  std::string token;
  while (std::getline(ss, token, ',')) {
    token = trim(token);
    if (token.empty()) {
      continue;
    }
    const auto colon = token.find(':');
    GrowthFamily family;
    try {
      family = growth_family_from_string(trim(token.substr(0, colon)));
    } catch (const DomainError& e) {
      throw ConfigError(e.what());
    }
    if (colon == std::string::npos) {
      for (double s : default_shape_grid(family)) {
        out.push_back({family, s});
      }
      continue;
    }
    if (!has_shape(family)) {
      throw ConfigError(to_string(family) + " takes no shape value");
    }
    out.push_back({family, parse_shape(trim(token.substr(colon + 1)))});
  }
  if (out.empty()) {
    throw ConfigError("growth family list is empty");
  }
  return out;
}

void GrowthFitConfig::validate() const {
  if (family_grid.empty()) {
    throw ConfigError("growth family grid is empty");
  }
  if (!(capacity_lo > 0.0 && capacity_lo < capacity_hi) || !std::isfinite(capacity_hi)) {
    throw ConfigError("carrying-capacity prior must be a positive, ordered interval");
  }
  if (kappa_max < 2) {
    throw ConfigError("kappa_max must be at least 2");
  }
  if (replicates < 1) {
    throw ConfigError("replicates must be positive");
  }
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw ConfigError("keep_fraction must lie in (0,1]");
  }
  smc.validate();
}

// ---------------------------------------------------------------------------

double r2g(const ObservedSample& observed, const std::vector<double>& expected) {
  if (expected.size() != observed.sizes.size()) {
    throw LengthMismatch("r2g: expected trajectory length differs from the observation");
  }
  std::vector<std::pair<double, double>> pairs;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (observed.sizes[i] && std::isfinite(expected[i])) {
      pairs.emplace_back(static_cast<double>(*observed.sizes[i]), expected[i]);
    }
  }
  if (pairs.size() < 3) {
    throw DataError("r2g needs at least 3 observed points with forecasts");
  }
  double mean = 0.0;
  for (const auto& [z, _] : pairs) {
    mean += z;
  }
  mean /= static_cast<double>(pairs.size());
  double sse = 0.0;
  double sst = 0.0;
  for (const auto& [z, zhat] : pairs) {
    sse += (z - zhat) * (z - zhat);
    sst += (z - mean) * (z - mean);
  }
  if (sst == 0.0) {
    throw ZeroVariance("r2g: all observed values are equal");
  }
  return 1.0 - sse / sst;
}

std::vector<double> one_step_forecast(const ObservedSample& observed, const OffspringLaw& offspring,
                                      const ControlLaw& control, int replicates, std::uint64_t seed) {
  const double m = offspring_mean(offspring);
  require_supercritical_mean(control, m);
  std::vector<double> out(observed.sizes.size(), kNaN);
  std::optional<std::size_t> previous;
  for (std::size_t i = 0; i < observed.sizes.size(); ++i) {
    if (!observed.sizes[i]) {
      continue;
    }
    if (previous) {
      const Count start = *observed.sizes[*previous];
      const std::size_t steps = i - *previous;
      Rng rng = substream(seed, stream_id(Stream::forecast), i);
      double acc = 0.0;
      for (int r = 0; r < replicates; ++r) {
        Count z = start;
        for (std::size_t s = 0; s < steps && z > 0; ++s) {
          z = step(offspring, control, m, z, rng).second;
        }
        acc += static_cast<double>(z);
      }
      out[i] = acc / replicates;
    }
    previous = i;
  }
  return out;
}

GrowthFit fit_family(const ObservedSample& observed, const GrowthCandidate& candidate, const GrowthFitConfig& config,
                     std::uint64_t seed) {
  config.validate();
  observed.validate();
  if (observed.sizes.front() && static_cast<double>(*observed.sizes.front()) >= config.capacity_lo) {
    std::cerr << "warning: Z_0 is not below the lower end of the carrying-capacity prior\n";
  }
  const ControlLaw family = candidate.control(config.capacity_lo);
  const PriorSpec priors =
      PriorSpec::make(config.kappa_max, ControlPrior::uniform(config.capacity_lo, config.capacity_hi),
                      config.dirichlet_concentration);
  const SmcProblem problem(observed, family, priors);
  SmcConfig smc = config.smc;
  smc.seed = seed;
  smc.retain_final_pool = config.stage2_source == StageTwoSource::pool;
  const auto history = run_smc(problem, smc);
  const auto& last = history.back();

  GrowthFit fit;
  fit.final_epsilon = last.epsilon;
  fit.kappa = kappa_posterior(last.particles, config.kappa_max, config.estimator);
  const SummaryStatistic observed_summary = summary(observed, problem.mask);
  const auto& candidates = config.stage2_source == StageTwoSource::pool ? last.pool : last.particles;
  const SelectedSet selected = select_and_reject(candidates, fit.kappa.point_estimate, config.keep_fraction,
                                                 problem.mask, observed_summary, config.min_kappa_particles);
  fit.adjusted = regression_adjust(selected, observed_summary, family);
  fit.posterior = derived_posteriors(fit.adjusted, family, config.posterior);

  FitScore& score = fit.score;
  score.candidate = candidate;
  score.kappa = fit.kappa.point_estimate;
  score.m_mean = fit.posterior.get("m").mean;
  score.capacity_mean = fit.posterior.get("k").mean;
  score.equilibrium_mean = fit.posterior.get("k_e").mean;
  score.expected_trajectory.assign(observed.sizes.size(), kNaN);
  score.r2g = -std::numeric_limits<double>::infinity();
  if (score.m_mean > 1.0 && score.capacity_mean > 0.0) {
    const OffspringLaw offspring = OffspringLaw::finite(fit.posterior.mean_probs);
    score.expected_trajectory = one_step_forecast(observed, offspring, candidate.control(score.capacity_mean),
                                                  config.replicates, seed);
    score.r2g = r2g(observed, score.expected_trajectory);
  } else {
    std::cerr << "warning: " << candidate.label() << ": posterior mean outside the model's domain; not scored\n";
  }
  return fit;
}

std::vector<GrowthFit> fit_grid(const ObservedSample& observed, const GrowthFitConfig& config) {
  config.validate();
  const std::size_t points = config.family_grid.size();
  const std::size_t threads = resolve_threads(config.smc.threads);
  const std::size_t outer = std::min(threads, points);
  GrowthFitConfig inner = config;
  inner.smc.threads = std::max<std::size_t>(1, threads / outer);

  std::vector<GrowthFit> fits(points);
  parallel_for(0, points, outer, [&](std::size_t g) {
    const std::uint64_t seed = substream(config.smc.seed, stream_id(Stream::growth_grid, g), 0)();
    fits[g] = fit_family(observed, config.family_grid[g], inner, seed);
  });
  return fits;
}

const FitScore& select_model(const std::vector<FitScore>& scores) {
  if (scores.empty()) {
    throw DomainError("select_model needs at least one score");
  }
  auto rank = [](const FitScore& s) {
    const GrowthFamily f = s.candidate.family;
    const int order = f == GrowthFamily::verhulst || f == GrowthFamily::theta_logistic ? 0 : 1;
    return std::make_tuple(-s.r2g, has_shape(f) ? 1 : 0, has_shape(f) ? s.candidate.shape : 0.0, order);
  };
  return *std::min_element(scores.begin(), scores.end(),
                           [&](const FitScore& a, const FitScore& b) { return rank(a) < rank(b); });
}

} // namespace cbp
