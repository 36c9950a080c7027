#pragma once

#include "cbp/abc.hpp"
#include "cbp/particle.hpp"
#include "cbp/pool.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace cbp {

/// Prior on the control parameter: Beta(a, b) on (0,1) for binomial controls,
/// Uniform(a, b) on the carrying capacity for growth laws.
struct ControlPrior {
  enum class Kind { beta, uniform };
  Kind kind = Kind::beta;
  double a = 1.0;
  double b = 1.0;

  static ControlPrior beta(double a, double b);
  static ControlPrior uniform(double lo, double hi);

  double lower() const { return kind == Kind::beta ? 0.0 : a; }
  double upper() const { return kind == Kind::beta ? 1.0 : b; }
  double width() const { return upper() - lower(); }
  bool contains(double x) const { return x > lower() && x < upper(); }
  double log_pdf(double x) const;
  double sample(Rng& rng) const;
};

struct PriorSpec {
  int kappa_max = 15;
  /// Dirichlet parameter per model; alpha[kappa] has kappa + 1 entries.
  std::vector<std::vector<double>> alpha;
  ControlPrior control;

  /// Uniform kappa prior on {2..kappa_max} with Dirichlet(c, ..., c) per model.
  static PriorSpec make(int kappa_max, ControlPrior control, double dirichlet_concentration = 1.0);
  void validate() const;
  const std::vector<double>& alpha_for(int kappa) const { return alpha.at(static_cast<std::size_t>(kappa)); }
};

struct SmcConfig {
  ToleranceSchedule schedule;
  std::size_t particles = 200;
  double tuning_a = 30.0;
  /// Lower bound on the gamma proposal sd; defaults to 1e-8 * width of the prior support.
  std::optional<double> sigma_floor;
  double max_attempts_factor = 100.0;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  /// Keep every comparable simulation of the last iteration (with importance
  /// weights) in IterationResult::pool.
  bool retain_final_pool = false;

  void validate() const;
};

/// Everything a candidate simulation needs that stays fixed across a run.
struct SmcProblem {
  ObservedSample observed;
  ObservationMask mask;
  DiscrepancyVector observed_raw;
  /// Control family; its parameter is replaced by each particle's gamma.
  ControlLaw control;
  PriorSpec priors;

  SmcProblem(ObservedSample obs, ControlLaw control_family, PriorSpec prior_spec);
};

struct IterationResult {
  int iteration = 0;  // 1-based
  std::vector<Particle> particles;
  double epsilon = 0.0;
  std::size_t attempts = 0;
  std::size_t discarded = 0;
  std::vector<int> dropped_models;  // groups removed after weight underflow
  std::vector<Particle> pool;       // last iteration only, when retained
};

/// Log-density of Dirichlet(alpha) at x, with zero coordinates treated as
/// the smallest positive double.
double dirichlet_log_pdf(std::span<const double> x, std::span<const double> alpha);

/// Dirichlet parameter of the proposal around a parent: a * p, after mixing p
/// with the barycentre at rate 1e-6 so no coordinate is frozen at zero.
std::vector<double> proposal_alpha(std::span<const double> parent_probs, double tuning_a);

struct Proposal {
  std::vector<double> probs;
  double gamma = 0.0;
};

/// Draws the control parameter given the parent's (gamma, m) and the proposed
/// offspring mean. Binomial controls: gamma' = tau^{-1}(U / m') with
/// U ~ N(tau(gamma*) m*, sigma^2) redrawn until gamma' lies in the prior
/// support. Growth laws: N(gamma*, sigma^2) truncated to the support.
std::optional<double> propose_gamma(double parent_gamma, double parent_mean, double new_mean, const ControlLaw& family,
                                    const ControlPrior& prior, double sigma, Rng& rng);

std::optional<Proposal> propose(const Particle& parent, const ControlLaw& family, const ControlPrior& prior,
                                double tuning_a, double sigma, Rng& rng);

/// Log of the gamma factor of the proposal density (truncation included).
double proposal_gamma_log_density(double gamma, double new_mean, double parent_gamma, double parent_mean,
                                  const ControlLaw& family, const ControlPrior& prior, double sigma);

/// Log proposal density q(probs', gamma' | parent); -infinity when the model
/// index differs or the point is outside the support.
double proposal_log_density(std::span<const double> probs, double gamma, const Particle& parent,
                            const ControlLaw& family, const ControlPrior& prior, double tuning_a, double sigma);

double proposal_density(std::span<const double> probs, double gamma, const Particle& parent, const ControlLaw& family,
                        const ControlPrior& prior, double tuning_a, double sigma);

/// Per-model proposal sd for gamma: sqrt(2 * weighted variance) of the
/// previous population's gammas, floored. Indexed by kappa.
std::vector<double> group_sigmas(const std::vector<Particle>& previous, int kappa_max, double floor);

/// Unnormalised log importance weight of a new particle:
/// log prior - log sum_j w_j q(new | parent_j) over parents of the same model.
double importance_log_weight(const Particle& child, const std::vector<const Particle*>& parents,
                             const SmcProblem& problem, double tuning_a, double sigma);

/// Normalises weights within each kappa-group (log-space). Returns the models
/// whose weights all underflowed; their particles are removed.
std::vector<int> normalise_group_weights(std::vector<Particle>& particles);

IterationResult smc_iteration_1(const SmcProblem& problem, const SmcConfig& config);

IterationResult smc_iteration_t(const IterationResult& previous, const SmcProblem& problem, const SmcConfig& config,
                                int t);

using IterationCallback = std::function<void(const IterationResult&)>;

std::vector<IterationResult> run_smc(const SmcProblem& problem, const SmcConfig& config,
                                     const IterationCallback& on_iteration = {});

enum class KappaEstimator {
  importance,  // sum of unnormalised importance weights per model
  counts,      // relative frequencies of kappa in the final population
};

struct KappaPosterior {
  std::vector<double> pmf;  // indexed by kappa, entries 0 and 1 unused
  std::vector<std::size_t> counts;
  double mean = 0.0;
  int point_estimate = 0;
};

KappaPosterior kappa_posterior(const std::vector<Particle>& particles, int kappa_max,
                               KappaEstimator estimator = KappaEstimator::importance);

/// Nearest integer, halves rounded up.
int round_half_up(double x);

} // namespace cbp
