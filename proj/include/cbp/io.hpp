#pragma once

#include "cbp/growth.hpp"
#include "cbp/refine.hpp"
#include "cbp/smc.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cbp {

/// Flat `key = value` run configuration. Every key is optional except where a
/// subcommand needs it; unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  std::string output = "out";
  std::string observations;  // observation CSV, relative to the config file

  // data-generating process for `simulate`
  std::string offspring;  // pmf(p0,...), binomial(n,p), geometric(q)
  std::string control = "binomial_xi";
  double shape = 0.0;
  std::optional<double> gamma;
  Count z0 = 1;
  int generations = 10;

  // stage 1
  int kappa_max = 15;
  double dirichlet_alpha = 1.0;
  std::optional<ControlPrior> gamma_prior;
  std::size_t particles = 200;
  std::vector<std::size_t> pool_sizes;
  double tuning_a = 30.0;
  std::optional<double> sigma_floor;
  double max_discard_factor = 100.0;

  // stage 2
  double keep_fraction = 0.1;
  StageTwoSource stage2_source = StageTwoSource::population;
  std::size_t min_kappa_particles = kMinStageTwoParticles;
  double hpd_level = 0.95;
  int kde_grid = 512;
  int kde2d_grid = 64;
  KappaEstimator kappa_estimate = KappaEstimator::importance;

  // growth fitting
  std::vector<GrowthCandidate> growth_families = default_growth_grid();
  int replicates = 200;

  std::filesystem::path source;       // file the config was read from
  std::map<std::string, int> lines;   // key -> line number

  static RunConfig parse(const std::string& text, const std::string& source_name = "<config>");
  static RunConfig load(const std::filesystem::path& path);

  /// Hash of the keys that shape stage 1 (priors, schedule, control family).
  /// Seed, threads, output and stage-2 keys are excluded.
  std::uint64_t hash() const;

  bool growth_control() const;
  ControlLaw control_family() const;
  OffspringLaw offspring_law() const;
  ControlPrior control_prior() const;
  PriorSpec prior_spec() const;
  SmcConfig smc_config() const;
  GrowthFitConfig growth_config() const;
  PosteriorOptions posterior_options() const;
  std::filesystem::path observations_path() const;
};

std::string to_string(KappaEstimator e);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 14695981039346656037ULL);

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);
double parse_double(std::string_view text);

/// `index,value` CSV; value is an integer or NA; an optional final row
/// `phi,<int>` carries phi_{n-1}. Lines starting with '#' are comments.
ObservedSample parse_observations(const std::string& text);
ObservedSample load_observations(const std::filesystem::path& path);
std::string format_observations(const ObservedSample& obs);
std::uint64_t observations_hash(const ObservedSample& obs);

/// Writes to a temporary file in the same directory and renames it over the
/// target.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

struct ParticleArchive {
  std::string kind = "population";  // or "pool": every comparable simulation of the iteration
  std::string run_id;
  int iteration = 0;
  double epsilon = 0.0;
  std::uint64_t config_hash = 0;
  std::uint64_t observations_hash = 0;
  int kappa_max = 0;
  std::size_t attempts = 0;
  std::size_t discarded = 0;
  std::optional<int> kappa_hat;  // pool archives carry the stage-1 point estimate
  std::vector<Particle> particles;
  std::vector<std::vector<double>> summaries;  // per particle, under the observation mask

  bool operator==(const ParticleArchive&) const = default;
};

ParticleArchive make_archive(const IterationResult& result, const SmcProblem& problem, std::uint64_t config_hash,
                             const std::string& run_id);

/// Rows go to `path`; trajectories to the sidecar `path` + ".traj".
void save_archive(const std::filesystem::path& path, const ParticleArchive& archive);
ParticleArchive load_archive(const std::filesystem::path& path);
std::filesystem::path trajectory_sidecar(const std::filesystem::path& archive_path);

std::string format_trajectory(const Trajectory& t);
std::string format_kappa_pmf(const KappaPosterior& post);
std::string format_adjusted(const AdjustedSample& sample);
AdjustedSample parse_adjusted(const std::string& text);
std::string format_density(const DensityEstimate& d);
std::string format_density_2d(const DensityGrid2D& d, const std::string& x_name, const std::string& y_name);
std::string format_posterior_summary(const PosteriorSummary& post, const AdjustedSample& sample);
std::string format_fit_scores(const std::vector<FitScore>& scores);
std::string format_expected_trajectory(const ObservedSample& obs, const FitScore& score);

} // namespace cbp
