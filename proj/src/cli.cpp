#include "cbp/cli.hpp"

#include "cbp/errors.hpp"
#include "cbp/growth.hpp"
#include "cbp/io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <iomanip>
#include <map>
#include <sstream>

namespace cbp {

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string config;
  std::string data;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::string> out;
};

RunConfig load_config(const CommonOptions& o) {
  RunConfig cfg = RunConfig::load(o.config);
  if (o.seed) {
    cfg.seed = *o.seed;
  }
  if (o.threads) {
    cfg.threads = *o.threads;
  }
  if (o.out) {
    cfg.output = *o.out;
  }
  return cfg;
}

ObservedSample load_data(const CommonOptions& o, const RunConfig& cfg) {
  return load_observations(o.data.empty() ? cfg.observations_path() : fs::path(o.data));
}

fs::path output_dir(const RunConfig& cfg) {
  return fs::path(cfg.output);
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

void write_posterior_files(const fs::path& dir, const AdjustedSample& adjusted, const PosteriorSummary& post) {
  write_file_atomic(dir / "adjusted.csv", format_adjusted(adjusted));
  write_file_atomic(dir / "posterior_summary.txt", format_posterior_summary(post, adjusted));
  for (const auto& p : post.parameters) {
    write_file_atomic(dir / ("posterior_" + p.name + ".csv"), format_density(p.density));
  }
  const std::string control = post.parameters.at(1).name;
  write_file_atomic(dir / ("kde2d_m_" + control + ".csv"), format_density_2d(post.joint_m_gamma, "m", control));
  if (post.joint_m_derived) {
    const std::string derived = post.parameters.at(2).name;
    write_file_atomic(dir / ("kde2d_m_" + derived + ".csv"), format_density_2d(*post.joint_m_derived, "m", derived));
  }
}

void print_posterior(std::ostream& out, const PosteriorSummary& post, const AdjustedSample& adjusted) {
  out << "stage 2: kappa = " << post.kappa << ", " << adjusted.rows.size() << " rows, " << adjusted.rejected_count
      << " rejected, adjustment " << to_string(adjusted.status) << '\n';
  for (const auto& p : post.parameters) {
    out << "  " << std::left << std::setw(6) << p.name << " mean " << format_double(p.mean) << "  "
        << format_double(p.interval.level * 100) << "% HPD [" << format_double(p.interval.lo) << ", "
        << format_double(p.interval.hi) << "]" << (p.interval.disconnected ? " (disconnected)" : "") << '\n';
  }
}

// `kappa_hat` comes from the final population; `candidates` is that population
// or the final iteration's pool.
void refine_particles(const std::vector<Particle>& candidates, const SmcProblem& problem, const RunConfig& cfg,
                      int kappa_hat, std::ostream& out) {
  const SummaryStatistic observed = summary(problem.observed, problem.mask);
  const SelectedSet selected =
      select_and_reject(candidates, kappa_hat, cfg.keep_fraction, problem.mask, observed, cfg.min_kappa_particles);
  const AdjustedSample adjusted = regression_adjust(selected, observed, problem.control);
  const PosteriorSummary post = derived_posteriors(adjusted, problem.control, cfg.posterior_options());
  write_posterior_files(output_dir(cfg), adjusted, post);
  print_posterior(out, post, adjusted);
}

// ---------------------------------------------------------------------------

void cmd_simulate(const CommonOptions& o, bool as_observations, std::ostream& out) {
  const RunConfig cfg = load_config(o);
  if (!cfg.gamma) {
    throw ConfigError(cfg.source.string() + ": simulate needs 'gamma' (gamma, or K for growth controls)");
  }
  const OffspringLaw offspring = cfg.offspring_law();
  const ControlLaw control = cfg.control_family().with_parameter(*cfg.gamma);
  Rng rng = substream(cfg.seed, stream_id(Stream::simulate), 0);
  const Trajectory t = simulate(offspring, control, cfg.z0, cfg.generations, rng);
  const fs::path dir = output_dir(cfg);
  write_file_atomic(dir / "trajectory.csv", format_trajectory(t));
  if (as_observations) {
    write_file_atomic(dir / "observations.csv", format_observations(ObservedSample::from_trajectory(t)));
  }
  out << "simulated " << t.generations() << " generations, Z_n = " << t.sizes.back();
  if (t.extinct_at) {
    out << " (extinct at generation " << *t.extinct_at << ")";
  }
  out << "\nwrote " << (dir / "trajectory.csv").string() << '\n';
}

void cmd_smc(const CommonOptions& o, bool refine, std::ostream& out) {
  const RunConfig cfg = load_config(o);
  const SmcProblem problem(load_data(o, cfg), cfg.control_family(), cfg.prior_spec());
  const std::uint64_t config_hash = cfg.hash();
  const std::string run_id = hex(fnv1a(hex(config_hash) + hex(observations_hash(problem.observed)), cfg.seed));
  const fs::path dir = output_dir(cfg);

  SmcConfig smc = cfg.smc_config();
  smc.retain_final_pool = cfg.stage2_source == StageTwoSource::pool;
  const auto history = run_smc(problem, smc, [&](const IterationResult& r) {
    save_archive(dir / ("archive_t" + std::to_string(r.iteration) + ".csv"),
                 make_archive(r, problem, config_hash, run_id));
    out << "iteration " << r.iteration << ": epsilon = " << format_double(r.epsilon) << ", attempts = " << r.attempts
        << ", discarded = " << r.discarded << '\n';
  });
  const auto& last = history.back().particles;
  const KappaPosterior post = kappa_posterior(last, cfg.kappa_max, cfg.kappa_estimate);
  write_file_atomic(dir / "kappa_pmf.csv", format_kappa_pmf(post));
  out << "kappa_hat = " << post.point_estimate << '\n';
  const IterationResult& final_iteration = history.back();
  if (smc.retain_final_pool) {
    IterationResult pool_view;
    pool_view.iteration = final_iteration.iteration;
    pool_view.epsilon = final_iteration.epsilon;
    pool_view.attempts = final_iteration.attempts;
    pool_view.discarded = final_iteration.discarded;
    pool_view.particles = final_iteration.pool;
    ParticleArchive pool = make_archive(pool_view, problem, config_hash, run_id);
    pool.kind = "pool";
    pool.kappa_hat = post.point_estimate;
    save_archive(dir / ("pool_t" + std::to_string(final_iteration.iteration) + ".csv"), pool);
  }
  if (refine) {
    refine_particles(smc.retain_final_pool ? final_iteration.pool : last, problem, cfg, post.point_estimate, out);
  }
}

void cmd_refine(const CommonOptions& o, const std::string& archive_path, const std::string& kappa, std::ostream& out) {
  const RunConfig cfg = load_config(o);
  const ParticleArchive archive = load_archive(archive_path);
  if (archive.config_hash != cfg.hash()) {
    throw ConfigError("archive '" + archive_path + "' was produced under a different stage-1 configuration (hash " +
                      hex(archive.config_hash) + ", config gives " + hex(cfg.hash()) + ")");
  }
  const SmcProblem problem(load_data(o, cfg), cfg.control_family(), cfg.prior_spec());
  if (archive.observations_hash != observations_hash(problem.observed)) {
    throw DataError("archive '" + archive_path + "' was produced from different observations");
  }
  int k = 0;
  if (kappa != "auto") {
    try {
      k = std::stoi(kappa);
    } catch (const std::exception&) {
      throw ConfigError("--kappa must be 'auto' or an integer");
    }
  } else if (archive.kappa_hat) {
    k = *archive.kappa_hat;
  } else if (archive.kind == "pool") {
    throw DataError("pool archive '" + archive_path + "' carries no kappa estimate; pass --kappa");
  } else {
    k = kappa_posterior(archive.particles, cfg.kappa_max, cfg.kappa_estimate).point_estimate;
  }
  refine_particles(archive.particles, problem, cfg, k, out);
}

void cmd_fit_growth(const CommonOptions& o, std::ostream& out) {
  const RunConfig cfg = load_config(o);
  const ObservedSample obs = load_data(o, cfg);
  const GrowthFitConfig gcfg = cfg.growth_config();
  const auto fits = fit_grid(obs, gcfg);
  std::vector<FitScore> scores;
  for (const auto& f : fits) {
    scores.push_back(f.score);
  }
  const FitScore& best = select_model(scores);
  const GrowthFit& best_fit = fits[static_cast<std::size_t>(&best - scores.data())];
  const fs::path dir = output_dir(cfg);
  write_file_atomic(dir / "fit_scores.csv", format_fit_scores(scores));
  write_file_atomic(dir / "expected_trajectory.csv", format_expected_trajectory(obs, best));
  write_file_atomic(dir / "best_model.txt", "model = " + best.candidate.label() + "\nr2g = " +
                                                format_double(best.r2g) + "\nkappa = " + std::to_string(best.kappa) +
                                                "\n");
  write_posterior_files(dir, best_fit.adjusted, best_fit.posterior);

  out << std::left << std::setw(22) << "model" << std::setw(14) << "r2g" << std::setw(7) << "kappa" << std::setw(14)
      << "m" << "K_e" << '\n';
  for (const auto& s : scores) {
    std::ostringstream row;
    row << std::fixed << std::left << std::setw(22) << s.candidate.label() << std::setprecision(4) << std::setw(14)
        << s.r2g << std::setw(7) << s.kappa << std::setw(14) << s.m_mean << std::setprecision(1)
        << s.equilibrium_mean;
    out << row.str() << '\n';
  }
  out << "best model: " << best.candidate.label() << '\n';
  print_posterior(out, best_fit.posterior, best_fit.adjusted);
}

void summarize_archive(const ParticleArchive& a, std::ostream& out) {
  out << "particle archive, run " << a.run_id << ", iteration " << a.iteration << '\n';
  out << "epsilon " << format_double(a.epsilon) << ", " << a.particles.size() << " particles, " << a.attempts
      << " attempts, " << a.discarded << " discarded\n";
  std::map<int, std::pair<std::size_t, double>> groups;
  std::map<int, double> gamma_sum;
  for (const auto& p : a.particles) {
    auto& g = groups[p.kappa];
    g.first += 1;
    g.second += p.weight;
    gamma_sum[p.kappa] += p.weight * p.gamma;
  }
  out << std::left << std::setw(7) << "kappa" << std::setw(8) << "count" << "weighted mean gamma\n";
  for (const auto& [k, g] : groups) {
    out << std::setw(7) << k << std::setw(8) << g.first << format_double(gamma_sum[k] / g.second) << '\n';
  }
}

void summarize_adjusted(const AdjustedSample& s, std::ostream& out) {
  out << "adjusted sample, kappa " << s.kappa << ", " << s.rows.size() << " rows, " << s.rejected_count
      << " rejected, adjustment " << to_string(s.status) << '\n';
  double total = 0.0;
  std::vector<double> means(static_cast<std::size_t>(s.kappa) + 4, 0.0);
  for (const auto& r : s.rows) {
    total += r.weight;
    for (std::size_t j = 0; j < r.probs.size(); ++j) {
      means[j] += r.weight * r.probs[j];
    }
    means[r.probs.size()] += r.weight * r.gamma;
    means[r.probs.size() + 1] += r.weight * r.m;
    means[r.probs.size() + 2] += r.weight * r.derived;
  }
  std::vector<std::string> names;
  for (int j = 0; j <= s.kappa; ++j) {
    names.push_back("p" + std::to_string(j));
  }
  names.push_back(s.derived_name == "k_e" ? "k" : "gamma");
  names.push_back("m");
  names.push_back(s.derived_name);
  for (std::size_t j = 0; j < names.size(); ++j) {
    out << std::left << std::setw(8) << names[j] << format_double(total > 0 ? means[j] / total : 0.0) << '\n';
  }
}

void cmd_summarize(const std::string& path, std::ostream& out) {
  const std::string text = read_file(path);
  if (text.rfind("# cbp-archive", 0) == 0) {
    summarize_archive(load_archive(path), out);
  } else if (text.rfind("# cbp-adjusted", 0) == 0) {
    summarize_adjusted(parse_adjusted(text), out);
  } else {
    throw DataError("'" + path + "' is neither a particle archive nor an adjusted sample");
  }
}

int report(std::ostream& err, int code, const std::string& kind, const std::string& message) {
  nlohmann::json j;
  j["error"] = kind;
  j["message"] = message;
  j["exit_code"] = code;
  err << j.dump() << '\n';
  return code;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"ABC model choice and estimation for controlled branching processes", "cbpabc"};
  app.require_subcommand(1);

  CommonOptions common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", common.config, "run configuration file")->required();
    sub->add_option("--seed", common.seed, "master seed (overrides the config)");
    sub->add_option("--threads", common.threads, "worker threads, 0 = all cores (overrides the config)");
    sub->add_option("--out", common.out, "output directory (overrides the config)");
  };

  bool as_observations = false;
  auto* simulate_cmd = app.add_subcommand("simulate", "simulate one trajectory from the configured process");
  add_common(simulate_cmd);
  simulate_cmd->add_flag("--as-observations", as_observations, "also write the path as an observation file");

  bool refine_too = false;
  auto* smc_cmd = app.add_subcommand("smc", "stage 1: ABC SMC model choice");
  add_common(smc_cmd);
  smc_cmd->add_option("--data", common.data, "observation CSV (overrides the config)");
  smc_cmd->add_flag("--refine", refine_too, "run stage 2 on the final population");

  std::string archive;
  std::string kappa = "auto";
  auto* refine_cmd = app.add_subcommand("refine", "stage 2: rejection and regression adjustment");
  add_common(refine_cmd);
  refine_cmd->add_option("--data", common.data, "observation CSV (overrides the config)");
  refine_cmd->add_option("--archive", archive, "final-iteration particle archive")->required();
  refine_cmd->add_option("--kappa", kappa, "model to refine: 'auto' or an integer")->capture_default_str();

  auto* growth_cmd = app.add_subcommand("fit-growth", "fit logistic-growth control laws and score them");
  add_common(growth_cmd);
  growth_cmd->add_option("--data", common.data, "observation CSV (overrides the config)");

  std::string summarize_path;
  auto* summarize_cmd = app.add_subcommand("summarize", "print a particle archive or adjusted sample");
  summarize_cmd->add_option("file", summarize_path, "archive or adjusted-sample CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    return report(err, 1, "usage", e.what());
  }

  try {
    if (simulate_cmd->parsed()) {
      cmd_simulate(common, as_observations, out);
    } else if (smc_cmd->parsed()) {
      cmd_smc(common, refine_too, out);
    } else if (refine_cmd->parsed()) {
      cmd_refine(common, archive, kappa, out);
    } else if (growth_cmd->parsed()) {
      cmd_fit_growth(common, out);
    } else if (summarize_cmd->parsed()) {
      cmd_summarize(summarize_path, out);
    }
  } catch (const ConfigError& e) {
    return report(err, 1, e.kind(), e.what());
  } catch (const DataError& e) {
    return report(err, 2, e.kind(), e.what());
  } catch (const BudgetExceeded& e) {
    return report(err, 3, e.kind(), e.what());
  } catch (const Error& e) {
    return report(err, 4, e.kind(), e.what());
  } catch (const fs::filesystem_error& e) {
    return report(err, 2, "filesystem", e.what());
  } catch (const std::exception& e) {
    return report(err, 4, "internal", e.what());
  }
  return 0;
}

} // namespace cbp
