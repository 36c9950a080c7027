#pragma once

#include "cbp/abc.hpp"
#include "cbp/laws.hpp"
#include "cbp/particle.hpp"

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

namespace cbp {

/// Particles of the selected model that pass the summary-statistic rejection
/// step, ordered by summary distance.
struct SelectedSet {
  std::vector<Particle> particles;
  std::vector<SummaryStatistic> summaries;
  std::vector<double> distances;
  double epsilon = 0.0;        // largest retained summary distance
  std::size_t candidates = 0;  // particles with kappa == kappa_hat
};

inline constexpr std::size_t kMinStageTwoParticles = 50;

/// Candidates for stage 2: the final SMC population, or every comparable
/// simulation generated in the final iteration (importance-weighted).
enum class StageTwoSource { population, pool };

std::string to_string(StageTwoSource s);
StageTwoSource stage_two_source_from_string(const std::string& name);

/// Keeps the ceil(keep_fraction * L) particles with kappa == kappa_hat whose
/// summaries are closest to the observed summary.
SelectedSet select_and_reject(const std::vector<Particle>& particles, int kappa_hat, double keep_fraction,
                              const ObservationMask& mask, const SummaryStatistic& observed,
                              std::size_t min_particles = kMinStageTwoParticles);

enum class AdjustStatus {
  adjusted,      // regression applied
  no_variation,  // every summary coordinate constant; nothing to regress on
  singular,      // rank-deficient design; values left unadjusted
};

std::string to_string(AdjustStatus s);

struct LinearAdjustment {
  Eigen::MatrixXd adjusted;      // rows x parameters
  Eigen::MatrixXd coefficients;  // summary-dims x parameters (slopes only)
  AdjustStatus status = AdjustStatus::adjusted;
};

/// Weighted local-linear regression adjustment: regresses each parameter
/// column on (S_i - S_obs) with intercept and returns theta_i - B^T (S_i - S_obs).
/// Summary columns without variation are left out of the design.
LinearAdjustment local_linear_adjust(const Eigen::MatrixXd& params, const Eigen::MatrixXd& summaries,
                                     const Eigen::VectorXd& observed, const Eigen::VectorXd& weights);

struct AdjustedRow {
  std::vector<double> probs;
  double gamma = 0.0;
  double m = 0.0;
  double derived = 0.0;  // tau(gamma) * m for binomial controls, K_e for growth laws
  double weight = 0.0;
  double raw_sum = 1.0;  // sum of the adjusted probabilities before renormalisation
};

struct AdjustedSample {
  int kappa = 0;
  std::vector<AdjustedRow> rows;
  std::size_t rejected_count = 0;
  AdjustStatus status = AdjustStatus::adjusted;
  bool renormalized = true;
  std::string derived_name = "tau_m";
};

/// Drops rows with a negative probability, renormalises the survivors onto
/// the simplex and fills m and the derived quantity.
AdjustedSample finalize_adjusted(int kappa, std::vector<AdjustedRow> rows, AdjustStatus status,
                                 const ControlLaw& family);

/// Epanechnikov weights 1 - (d/eps)^2 times the particles' importance
/// weights, regression adjustment of (p_0..p_kappa, gamma), then
/// finalize_adjusted.
AdjustedSample regression_adjust(const SelectedSet& selected, const SummaryStatistic& observed,
                                 const ControlLaw& family);

/// Quantity derived from (m, gamma): tau(gamma) m, or the equilibrium K_e.
double derived_quantity(const ControlLaw& family, double m, double gamma);

struct DensityEstimate {
  Eigen::VectorXd grid;
  Eigen::VectorXd density;
  double bandwidth = 0.0;

  double integral() const;
  double mean() const;
};

double effective_sample_size(const Eigen::VectorXd& weights);

/// Weighted Gaussian KDE on an equispaced grid over [min - 3h, max + 3h],
/// h = 1.06 sd_w n_eff^(-1/5).
DensityEstimate kde(const Eigen::VectorXd& values, const Eigen::VectorXd& weights, int grid_size = 512);

struct HpdInterval {
  double level = 0.95;
  double lo = 0.0;
  double hi = 0.0;
  double mass = 0.0;       // grid mass inside [lo, hi]
  bool disconnected = false;  // the super-level set has more than one piece
};

/// Highest-density interval by lowering a threshold over the grid until the
/// enclosed mass reaches `level`; returns the hull of the super-level set.
HpdInterval hpd(const DensityEstimate& density, double level = 0.95);

struct DensityGrid2D {
  Eigen::VectorXd x;
  Eigen::VectorXd y;
  Eigen::MatrixXd density;  // density(i, j) at (x[i], y[j])
};

DensityGrid2D kde2d(const Eigen::VectorXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& weights,
                    int grid_size = 64);

struct ParameterPosterior {
  std::string name;
  double mean = 0.0;
  DensityEstimate density;
  HpdInterval interval;
};

struct PosteriorSummary {
  int kappa = 0;
  std::vector<ParameterPosterior> parameters;  // m, gamma (or K), derived
  DensityGrid2D joint_m_gamma;
  std::optional<DensityGrid2D> joint_m_derived;  // (m, K_e) for growth laws
  std::vector<double> mean_probs;

  const ParameterPosterior& get(const std::string& name) const;
};

struct PosteriorOptions {
  int grid_size = 512;
  int grid_size_2d = 64;
  double level = 0.95;
};

PosteriorSummary derived_posteriors(const AdjustedSample& adjusted, const ControlLaw& family,
                                    const PosteriorOptions& options = {});

} // namespace cbp
