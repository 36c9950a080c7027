#include "cbp/smc.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numbers>
#include <numeric>

namespace cbp {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kBarycentreMix = 1e-6;
constexpr int kGammaRedrawBudget = 1000;

double log_sum_exp(std::span<const double> v) {
  double top = kNegInf;
  for (double x : v) {
    top = std::max(top, x);
  }
  if (!std::isfinite(top)) {
    return top;
  }
  double acc = 0.0;
  for (double x : v) {
    acc += std::exp(x - top);
  }
  return top + std::log(acc);
}

double normal_log_pdf(double z) {
  return -0.5 * z * z - 0.5 * std::log(2.0 * std::numbers::pi);
}

/// log(Phi(b) - Phi(a)) for standardised bounds a < b, using tails to keep
/// precision away from the centre.
double log_normal_mass(double a, double b) {
  constexpr double r = std::numbers::sqrt2;
  double mass;
  if (a >= 0.0) {
    mass = 0.5 * std::erfc(a / r) - 0.5 * std::erfc(b / r);
  } else if (b <= 0.0) {
    mass = 0.5 * std::erfc(-b / r) - 0.5 * std::erfc(-a / r);
  } else {
    mass = 1.0 - 0.5 * std::erfc(-a / r) - 0.5 * std::erfc(b / r);
  }
  return mass > 0.0 ? std::log(mass) : kNegInf;
}

double dirichlet_log_norm(std::span<const double> alpha) {
  double sum = 0.0;
  double lg = 0.0;
  for (double a : alpha) {
    sum += a;
    lg += std::lgamma(a);
  }
  return std::lgamma(sum) - lg;
}

double dirichlet_log_kernel(std::span<const double> x, std::span<const double> alpha) {
  constexpr double log_tiny = -708.3964185322641;  // log(DBL_MIN)
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double lx = x[i] > 0.0 ? std::max(std::log(x[i]), log_tiny) : log_tiny;
    acc += (alpha[i] - 1.0) * lx;
  }
  return acc;
}

double mean_of(std::span<const double> probs) {
  double m = 0.0;
  for (std::size_t j = 1; j < probs.size(); ++j) {
    m += static_cast<double>(j) * probs[j];
  }
  return m;
}

/// Read-only view of the previous population used while sampling iteration t.
struct PopulationSnapshot {
  std::vector<std::vector<std::size_t>> members;  // by kappa
  std::vector<std::vector<double>> cumulative;    // by kappa
  std::vector<int> live_models;
  std::vector<double> sigma;

  PopulationSnapshot(const std::vector<Particle>& prev, int kappa_max, double floor)
      : members(static_cast<std::size_t>(kappa_max) + 1), cumulative(static_cast<std::size_t>(kappa_max) + 1) {
    for (std::size_t i = 0; i < prev.size(); ++i) {
      members.at(static_cast<std::size_t>(prev[i].kappa)).push_back(i);
    }
    for (int k = 2; k <= kappa_max; ++k) {
      auto& c = cumulative[static_cast<std::size_t>(k)];
      double acc = 0.0;
      for (std::size_t i : members[static_cast<std::size_t>(k)]) {
        acc += prev[i].weight;
        c.push_back(acc);
      }
      if (!c.empty() && acc > 0.0) {
        live_models.push_back(k);
      }
    }
    sigma = group_sigmas(prev, kappa_max, floor);
  }

  std::size_t draw_parent(int kappa, Rng& rng) const {
    const auto& c = cumulative[static_cast<std::size_t>(kappa)];
    const double u = uniform01(rng) * c.back();
    auto it = std::upper_bound(c.begin(), c.end(), u);
    if (it == c.end()) {
      --it;
    }
    return members[static_cast<std::size_t>(kappa)][static_cast<std::size_t>(it - c.begin())];
  }
};

std::optional<Particle> simulate_candidate(const SmcProblem& problem, int kappa, std::vector<double> probs, double gamma,
                                           Rng& rng) {
  const double m = mean_of(probs);
  if (problem.control.is_density_dependent() && !(m > 1.0)) {
    // Growth laws are only defined for supercritical offspring means.
    return std::nullopt;
  }
  const OffspringLaw offspring = OffspringLaw::finite(probs);
  const ControlLaw control = problem.control.with_parameter(gamma);
  const Count z0 = *problem.observed.sizes.front();
  Particle p;
  p.kappa = kappa;
  p.probs = std::move(probs);
  p.gamma = gamma;
  p.trajectory = simulate(offspring, control, z0, problem.observed.generations(), rng);
  p.distance = raw_distance(problem.observed_raw, p.trajectory, problem.mask);
  if (!std::isfinite(p.distance)) {
    return std::nullopt;
  }
  return p;
}

/// Renormalises a Dirichlet draw so it sums to 1 within 1e-12 after
/// floating-point accumulation.
void renormalise(std::vector<double>& probs) {
  const double s = std::accumulate(probs.begin(), probs.end(), 0.0);
  for (double& p : probs) {
    p /= s;
  }
}

PoolOptions pool_options(const SmcConfig& config, int t) {
  PoolOptions o;
  o.seed = config.seed;
  o.stream = stream_id(Stream::smc_iteration, static_cast<std::uint64_t>(t));
  o.threads = config.threads;
  o.max_attempts_factor = config.max_attempts_factor;
  o.retain_all = config.retain_final_pool && t == static_cast<int>(config.schedule.iterations());
  return o;
}

} // namespace

// ---------------------------------------------------------------------------

ControlPrior ControlPrior::beta(double a, double b) {
  if (!(a > 0.0 && b > 0.0)) {
    throw ConfigError("beta prior parameters must be positive");
  }
  return ControlPrior{Kind::beta, a, b};
}

ControlPrior ControlPrior::uniform(double lo, double hi) {
  if (!(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
    throw ConfigError("uniform prior needs finite lo < hi");
  }
  return ControlPrior{Kind::uniform, lo, hi};
}

double ControlPrior::log_pdf(double x) const {
  if (!contains(x)) {
    return kNegInf;
  }
  if (kind == Kind::uniform) {
    return -std::log(b - a);
  }
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x);
}

double ControlPrior::sample(Rng& rng) const {
  if (kind == Kind::uniform) {
    double x = a;
    while (!contains(x)) {
      x = a + (b - a) * uniform01(rng);
    }
    return x;
  }
  return sample_beta(a, b, rng);
}

PriorSpec PriorSpec::make(int kappa_max, ControlPrior control, double dirichlet_concentration) {
  PriorSpec p;
  p.kappa_max = kappa_max;
  p.control = control;
  p.alpha.resize(static_cast<std::size_t>(std::max(kappa_max, 2)) + 1);
  for (int k = 2; k <= kappa_max; ++k) {
    p.alpha[static_cast<std::size_t>(k)].assign(static_cast<std::size_t>(k) + 1, dirichlet_concentration);
  }
  p.validate();
  return p;
}

void PriorSpec::validate() const {
  if (kappa_max < 2) {
    throw ConfigError("kappa_max must be at least 2");
  }
  if (alpha.size() < static_cast<std::size_t>(kappa_max) + 1) {
    throw ConfigError("Dirichlet parameters missing for some models");
  }
  for (int k = 2; k <= kappa_max; ++k) {
    const auto& a = alpha[static_cast<std::size_t>(k)];
    if (a.size() != static_cast<std::size_t>(k) + 1) {
      throw ConfigError("Dirichlet parameter for kappa=" + std::to_string(k) + " has the wrong length");
    }
    for (double v : a) {
      if (!(v > 0.0)) {
        throw ConfigError("Dirichlet parameters must be positive");
      }
    }
  }
}

void SmcConfig::validate() const {
  if (schedule.iterations() < 1) {
    throw ConfigError("SMC needs at least one iteration");
  }
  if (!(tuning_a > 0.0)) {
    throw ConfigError("tuning parameter a must be positive");
  }
  if (sigma_floor && !(*sigma_floor >= 0.0)) {
    throw ConfigError("sigma_floor must be non-negative");
  }
  for (std::size_t pool : schedule.pool_sizes) {
    if (pool < particles) {
      throw ConfigError("pool sizes must be at least the particle count");
    }
  }
}

SmcProblem::SmcProblem(ObservedSample obs, ControlLaw control_family, PriorSpec prior_spec)
    : observed(std::move(obs)), control(std::move(control_family)), priors(std::move(prior_spec)) {
  observed.validate();
  priors.validate();
  mask = ObservationMask::from(observed);
  observed_raw = raw_vector(observed, mask);
  if (control.is_density_dependent() != (priors.control.kind == ControlPrior::Kind::uniform)) {
    throw ConfigError("binomial controls take a beta prior on gamma; growth laws a uniform prior on K");
  }
}

// ---------------------------------------------------------------------------

double dirichlet_log_pdf(std::span<const double> x, std::span<const double> alpha) {
  return dirichlet_log_norm(alpha) + dirichlet_log_kernel(x, alpha);
}

std::vector<double> proposal_alpha(std::span<const double> parent_probs, double tuning_a) {
  const double bary = 1.0 / static_cast<double>(parent_probs.size());
  std::vector<double> alpha(parent_probs.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    alpha[i] = tuning_a * ((1.0 - kBarycentreMix) * parent_probs[i] + kBarycentreMix * bary);
  }
  return alpha;
}

std::optional<double> propose_gamma(double parent_gamma, double parent_mean, double new_mean, const ControlLaw& family,
                                    const ControlPrior& prior, double sigma, Rng& rng) {
  std::normal_distribution<double> noise(0.0, 1.0);
  if (family.is_density_dependent()) {
    for (int attempt = 0; attempt < kGammaRedrawBudget; ++attempt) {
      const double g = parent_gamma + sigma * noise(rng);
      if (prior.contains(g)) {
        return g;
      }
    }
    return std::nullopt;
  }
  if (!(new_mean > 0.0)) {
    return std::nullopt;
  }
  const double centre = tau(family.with_parameter(parent_gamma)) * parent_mean;
  for (int attempt = 0; attempt < kGammaRedrawBudget; ++attempt) {
    const double u = (centre + sigma * noise(rng)) / new_mean;
    if (u > 0.0 && u < 1.0) {
      const double g = tau_inverse(family, u);
      if (prior.contains(g)) {
        return g;
      }
    }
  }
  return std::nullopt;
}

std::optional<Proposal> propose(const Particle& parent, const ControlLaw& family, const ControlPrior& prior,
                                double tuning_a, double sigma, Rng& rng) {
  Proposal out;
  out.probs = sample_dirichlet(proposal_alpha(parent.probs, tuning_a), rng);
  renormalise(out.probs);
  const auto g = propose_gamma(parent.gamma, particle_mean(parent), mean_of(out.probs), family, prior, sigma, rng);
  if (!g) {
    return std::nullopt;
  }
  out.gamma = *g;
  return out;
}

double proposal_gamma_log_density(double gamma, double new_mean, double parent_gamma, double parent_mean,
                                  const ControlLaw& family, const ControlPrior& prior, double sigma) {
  if (!prior.contains(gamma) || !(sigma > 0.0)) {
    return kNegInf;
  }
  if (family.is_density_dependent()) {
    const double log_mass = log_normal_mass((prior.lower() - parent_gamma) / sigma, (prior.upper() - parent_gamma) / sigma);
    if (!std::isfinite(log_mass)) {
      return kNegInf;
    }
    return normal_log_pdf((gamma - parent_gamma) / sigma) - std::log(sigma) - log_mass;
  }
  if (!(new_mean > 0.0)) {
    return kNegInf;
  }
  // U = tau(gamma) * m'. tau is the identity on (0,1) for this family, so the
  // support of U is (tau(lo) m', tau(hi) m') and the Jacobian is m' tau'(gamma).
  const double centre = parent_gamma * parent_mean;
  const double u = gamma * new_mean;
  const double lo = prior.lower() * new_mean;
  const double hi = prior.upper() * new_mean;
  const double log_mass = log_normal_mass((lo - centre) / sigma, (hi - centre) / sigma);
  if (!std::isfinite(log_mass)) {
    return kNegInf;
  }
  return normal_log_pdf((u - centre) / sigma) - std::log(sigma) + std::log(new_mean) +
         std::log(tau_derivative(family, gamma)) - log_mass;
}

double proposal_log_density(std::span<const double> probs, double gamma, const Particle& parent,
                            const ControlLaw& family, const ControlPrior& prior, double tuning_a, double sigma) {
  if (probs.size() != parent.probs.size()) {
    return kNegInf;
  }
  const auto alpha = proposal_alpha(parent.probs, tuning_a);
  return dirichlet_log_pdf(probs, alpha) +
         proposal_gamma_log_density(gamma, mean_of(probs), parent.gamma, particle_mean(parent), family, prior, sigma);
}

double proposal_density(std::span<const double> probs, double gamma, const Particle& parent, const ControlLaw& family,
                        const ControlPrior& prior, double tuning_a, double sigma) {
  return std::exp(proposal_log_density(probs, gamma, parent, family, prior, tuning_a, sigma));
}

std::vector<double> group_sigmas(const std::vector<Particle>& previous, int kappa_max, double floor) {
  const auto size = static_cast<std::size_t>(kappa_max) + 1;
  std::vector<double> wsum(size, 0.0), mean(size, 0.0), var(size, 0.0);
  for (const auto& p : previous) {
    const auto k = static_cast<std::size_t>(p.kappa);
    wsum[k] += p.weight;
    mean[k] += p.weight * p.gamma;
  }
  for (std::size_t k = 0; k < size; ++k) {
    if (wsum[k] > 0.0) {
      mean[k] /= wsum[k];
    }
  }
  for (const auto& p : previous) {
    const auto k = static_cast<std::size_t>(p.kappa);
    const double d = p.gamma - mean[k];
    var[k] += p.weight * d * d;
  }
  std::vector<double> sigma(size, floor);
  for (std::size_t k = 0; k < size; ++k) {
    if (wsum[k] > 0.0) {
      sigma[k] = std::max(std::sqrt(2.0 * var[k] / wsum[k]), floor);
    }
  }
  return sigma;
}

double importance_log_weight(const Particle& child, const std::vector<const Particle*>& parents,
                             const SmcProblem& problem, double tuning_a, double sigma) {
  const double log_prior = dirichlet_log_pdf(child.probs, problem.priors.alpha_for(child.kappa)) +
                           problem.priors.control.log_pdf(child.gamma);
  std::vector<double> terms;
  terms.reserve(parents.size());
  for (const Particle* parent : parents) {
    if (parent->kappa != child.kappa || !(parent->weight > 0.0)) {
      continue;
    }
    terms.push_back(std::log(parent->weight) +
                    proposal_log_density(child.probs, child.gamma, *parent, problem.control, problem.priors.control,
                                         tuning_a, sigma));
  }
  const double log_q = log_sum_exp(terms);
  if (!std::isfinite(log_q)) {
    return kNegInf;
  }
  return log_prior - log_q;
}

std::vector<int> normalise_group_weights(std::vector<Particle>& particles) {
  int kappa_max = 0;
  for (const auto& p : particles) {
    kappa_max = std::max(kappa_max, p.kappa);
  }
  std::vector<double> top(static_cast<std::size_t>(kappa_max) + 1, kNegInf);
  for (const auto& p : particles) {
    auto& t = top[static_cast<std::size_t>(p.kappa)];
    t = std::max(t, p.log_raw_weight);
  }
  std::vector<double> sum(top.size(), 0.0);
  for (auto& p : particles) {
    const double t = top[static_cast<std::size_t>(p.kappa)];
    p.weight = std::isfinite(t) ? std::exp(p.log_raw_weight - t) : 0.0;
    sum[static_cast<std::size_t>(p.kappa)] += p.weight;
  }
  std::vector<int> dropped;
  for (std::size_t k = 0; k < top.size(); ++k) {
    const bool present = std::any_of(particles.begin(), particles.end(), [&](const Particle& p) {
      return static_cast<std::size_t>(p.kappa) == k;
    });
    if (present && !(sum[k] > 0.0)) {
      dropped.push_back(static_cast<int>(k));
    }
  }
  if (!dropped.empty()) {
    std::erase_if(particles, [&](const Particle& p) {
      return std::find(dropped.begin(), dropped.end(), p.kappa) != dropped.end();
    });
  }
  for (auto& p : particles) {
    p.weight /= sum[static_cast<std::size_t>(p.kappa)];
  }
  return dropped;
}

// ---------------------------------------------------------------------------

IterationResult smc_iteration_1(const SmcProblem& problem, const SmcConfig& config) {
  const int kappa_max = problem.priors.kappa_max;
  CandidateSampler sampler = [&](std::uint64_t, Rng& rng) -> std::optional<Particle> {
    std::uniform_int_distribution<int> model(2, kappa_max);
    const int kappa = model(rng);
    auto probs = sample_dirichlet(problem.priors.alpha_for(kappa), rng);
    renormalise(probs);
    const double gamma = problem.priors.control.sample(rng);
    return simulate_candidate(problem, kappa, std::move(probs), gamma, rng);
  };
  auto pool = run_pool(sampler, config.schedule.pool_sizes.at(0), config.particles, pool_options(config, 1));

  IterationResult out;
  out.iteration = 1;
  out.epsilon = pool.epsilon;
  out.attempts = pool.attempts;
  out.discarded = pool.discarded;
  out.particles = std::move(pool.particles);
  const double w = 1.0 / static_cast<double>(out.particles.size());
  for (auto& p : out.particles) {
    p.log_raw_weight = -std::log(static_cast<double>(out.particles.size()));
    p.weight = w;
  }
  // Per-model normalisation, as in later iterations.
  normalise_group_weights(out.particles);
  out.pool = std::move(pool.pool);
  for (auto& p : out.pool) {
    p.log_raw_weight = -std::log(static_cast<double>(out.pool.size()));
  }
  normalise_group_weights(out.pool);
  return out;
}

IterationResult smc_iteration_t(const IterationResult& previous, const SmcProblem& problem, const SmcConfig& config,
                                int t) {
  const int kappa_max = problem.priors.kappa_max;
  const double floor = config.sigma_floor.value_or(1e-8 * problem.priors.control.width());
  const PopulationSnapshot snapshot(previous.particles, kappa_max, floor);
  if (snapshot.live_models.empty()) {
    throw DegenerateSample("no model has positive weight in the previous population");
  }

  CandidateSampler sampler = [&](std::uint64_t, Rng& rng) -> std::optional<Particle> {
    std::uniform_int_distribution<int> model(2, kappa_max);
    int kappa = model(rng);
    // Models without surviving parents are redrawn.
    while (std::find(snapshot.live_models.begin(), snapshot.live_models.end(), kappa) == snapshot.live_models.end()) {
      kappa = model(rng);
    }
    const Particle& parent = previous.particles[snapshot.draw_parent(kappa, rng)];
    const double sigma = snapshot.sigma[static_cast<std::size_t>(kappa)];
    auto proposal = propose(parent, problem.control, problem.priors.control, config.tuning_a, sigma, rng);
    if (!proposal) {
      return std::nullopt;
    }
    return simulate_candidate(problem, kappa, std::move(proposal->probs), proposal->gamma, rng);
  };
  auto pool = run_pool(sampler, config.schedule.pool_sizes.at(static_cast<std::size_t>(t - 1)), config.particles,
                       pool_options(config, t));

  IterationResult out;
  out.iteration = t;
  out.epsilon = pool.epsilon;
  out.attempts = pool.attempts;
  out.discarded = pool.discarded;
  out.particles = std::move(pool.particles);

  std::vector<std::vector<const Particle*>> parents(static_cast<std::size_t>(kappa_max) + 1);
  for (const auto& p : previous.particles) {
    parents[static_cast<std::size_t>(p.kappa)].push_back(&p);
  }
  auto weigh = [&](std::vector<Particle>& population) {
    parallel_for(0, population.size(), config.threads, [&](std::size_t i) {
      Particle& child = population[i];
      child.log_raw_weight =
          importance_log_weight(child, parents[static_cast<std::size_t>(child.kappa)], problem, config.tuning_a,
                                snapshot.sigma[static_cast<std::size_t>(child.kappa)]);
    });
  };
  weigh(out.particles);
  out.dropped_models = normalise_group_weights(out.particles);
  out.pool = std::move(pool.pool);
  weigh(out.pool);
  normalise_group_weights(out.pool);
  for (int k : out.dropped_models) {
    std::cerr << "warning: iteration " << t << ": weights of model kappa=" << k << " underflowed; model dropped\n";
  }
  return out;
}

std::vector<IterationResult> run_smc(const SmcProblem& problem, const SmcConfig& config,
                                     const IterationCallback& on_iteration) {
  config.validate();
  std::vector<IterationResult> history;
  history.push_back(smc_iteration_1(problem, config));
  if (on_iteration) {
    on_iteration(history.back());
  }
  for (int t = 2; t <= static_cast<int>(config.schedule.iterations()); ++t) {
    history.push_back(smc_iteration_t(history.back(), problem, config, t));
    if (!(history.back().epsilon < history[history.size() - 2].epsilon)) {
      std::cerr << "warning: realised tolerance did not decrease at iteration " << t << " ("
                << history[history.size() - 2].epsilon << " -> " << history.back().epsilon << ")\n";
    }
    if (on_iteration) {
      on_iteration(history.back());
    }
  }
  return history;
}

int round_half_up(double x) {
  return static_cast<int>(std::floor(x + 0.5));
}

KappaPosterior kappa_posterior(const std::vector<Particle>& particles, int kappa_max, KappaEstimator estimator) {
  KappaPosterior post;
  const auto size = static_cast<std::size_t>(kappa_max) + 1;
  post.pmf.assign(size, 0.0);
  post.counts.assign(size, 0);
  if (particles.empty()) {
    throw DegenerateSample("kappa posterior of an empty population");
  }
  double top = kNegInf;
  for (const auto& p : particles) {
    top = std::max(top, p.log_raw_weight);
  }
  double total = 0.0;
  for (const auto& p : particles) {
    const auto k = static_cast<std::size_t>(p.kappa);
    post.counts.at(k) += 1;
    const double w = estimator == KappaEstimator::counts ? 1.0 : std::exp(p.log_raw_weight - top);
    post.pmf[k] += w;
    total += w;
  }
  if (!(total > 0.0)) {
    throw DegenerateSample("kappa posterior has zero total weight");
  }
  for (std::size_t k = 0; k < size; ++k) {
    post.pmf[k] /= total;
    post.mean += static_cast<double>(k) * post.pmf[k];
  }
  post.point_estimate = round_half_up(post.mean);
  return post;
}

} // namespace cbp
