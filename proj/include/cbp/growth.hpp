#pragma once

#include "cbp/refine.hpp"
#include "cbp/smc.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cbp {

/// One point of the model grid: a growth family and its shape (theta or
/// beta; ignored for Verhulst and Gompertz).
struct GrowthCandidate {
  GrowthFamily family = GrowthFamily::verhulst;
  double shape = 0.0;

  std::string label() const;
  ControlLaw control(double capacity) const;
  bool operator==(const GrowthCandidate&) const = default;
};

/// Parses "verhulst", "theta_logistic:2", "hassell:1.25", "gompertz". A
/// shaped family without a value expands to its default shape grid.
std::vector<GrowthCandidate> parse_growth_candidates(const std::string& spec);

/// Verhulst, theta in {0.25, 0.5, 0.55, 1, 1.5, 2, 3}, beta in
/// {0.05, 0.25, 0.5, 1, 1.25, 2}, Gompertz.
std::vector<GrowthCandidate> default_growth_grid();
std::vector<double> default_shape_grid(GrowthFamily family);

struct GrowthFitConfig {
  std::vector<GrowthCandidate> family_grid = default_growth_grid();
  double capacity_lo = 5000.0;
  double capacity_hi = 10000.0;
  int kappa_max = 6;
  double dirichlet_concentration = 1.0;
  int replicates = 200;

  SmcConfig smc;
  KappaEstimator estimator = KappaEstimator::importance;
  double keep_fraction = 0.1;
  StageTwoSource stage2_source = StageTwoSource::population;
  std::size_t min_kappa_particles = kMinStageTwoParticles;
  PosteriorOptions posterior;

  void validate() const;
};

struct FitScore {
  GrowthCandidate candidate;
  double r2g = 0.0;
  /// One-step-ahead posterior-mean forecasts, one per generation; NaN where
  /// there is no forecast (unobserved, or no earlier observation).
  std::vector<double> expected_trajectory;
  int kappa = 0;
  double m_mean = 0.0;
  double capacity_mean = 0.0;
  double equilibrium_mean = 0.0;
};

struct GrowthFit {
  FitScore score;
  KappaPosterior kappa;
  AdjustedSample adjusted;
  PosteriorSummary posterior;
  double final_epsilon = 0.0;
};

/// 1 - SSE/SST over the generations where both the observation and the
/// forecast exist. Throws ZeroVariance when those observations are all equal.
double r2g(const ObservedSample& observed, const std::vector<double>& expected);

/// Mean of `replicates` simulations of each observed generation, started
/// from the previous observed size (several steps across gaps).
std::vector<double> one_step_forecast(const ObservedSample& observed, const OffspringLaw& offspring,
                                      const ControlLaw& control, int replicates, std::uint64_t seed);

/// Stage 1 and stage 2 for one grid point, followed by the R^2_g score.
GrowthFit fit_family(const ObservedSample& observed, const GrowthCandidate& candidate, const GrowthFitConfig& config,
                     std::uint64_t seed);

/// Fits every grid point; grid point g uses a seed derived from
/// (config.smc.seed, g). Results follow grid order.
std::vector<GrowthFit> fit_grid(const ObservedSample& observed, const GrowthFitConfig& config);

/// Highest r2g. Ties: Verhulst, then Gompertz, then shaped families by
/// smaller shape (theta before hassell at equal shape).
const FitScore& select_model(const std::vector<FitScore>& scores);

} // namespace cbp
