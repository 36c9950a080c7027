#include "cbp/io.hpp"

#include "cbp/errors.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <system_error>

namespace cbp {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) {
    return {};
  }
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) {
      return out;
    }
    start = pos + 1;
  }
}

template <typename Int>
std::optional<Int> parse_int(std::string_view text) {
  Int v{};
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end || text.empty()) {
    return std::nullopt;
  }
  return v;
}

std::optional<double> try_parse_double(std::string_view text) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end || text.empty()) {
    return std::nullopt;
  }
  return v;
}

// name(a,b,...) -> (name, [a, b, ...])
std::optional<std::pair<std::string, std::vector<double>>> parse_call(const std::string& text) {
  const auto open = text.find('(');
  if (open == std::string::npos || text.back() != ')') {
    return std::nullopt;
  }
  std::pair<std::string, std::vector<double>> out{trim(text.substr(0, open)), {}};
  for (const auto& arg : split(std::string_view(text).substr(open + 1, text.size() - open - 2), ',')) {
    auto v = try_parse_double(arg);
    if (!v) {
      return std::nullopt;
    }
    out.second.push_back(*v);
  }
  return out;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::uint64_t parse_hex(const std::string& text) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v, 16);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ParseError("invalid hash '" + text + "'");
  }
  return v;
}

std::string format_prior(const ControlPrior& p) {
  return std::string(p.kind == ControlPrior::Kind::beta ? "beta(" : "uniform(") + format_double(p.a) + "," +
         format_double(p.b) + ")";
}

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out += (i ? "," : "") + std::to_string(v[i]);
  }
  return out;
}

std::string format_optional_count(const std::optional<Count>& v) {
  return v ? std::to_string(*v) : "NA";
}

} // namespace

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text) {
  auto v = try_parse_double(text);
  if (!v) {
    throw ParseError("invalid number '" + std::string(text) + "'");
  }
  return *v;
}

std::string to_string(KappaEstimator e) {
  return e == KappaEstimator::importance ? "importance" : "counts";
}

// ---------------------------------------------------------------------------
// RunConfig

RunConfig RunConfig::parse(const std::string& text, const std::string& source_name) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int number = 0;

  auto fail = [&](int at, const std::string& message) -> ConfigError {
    return ConfigError(source_name + ":" + std::to_string(at) + ": " + message);
  };

  using Setter = std::function<void(const std::string&)>;
  auto positive_int = [&](auto& field) {
    return Setter([&field, &fail, &number](const std::string& v) {
      using T = std::decay_t<decltype(field)>;
      auto x = parse_int<T>(v);
      if (!x || *x < 1) {
        throw fail(number, "expected a positive integer, got '" + v + "'");
      }
      field = *x;
    });
  };
  auto real = [&](double& field, double lo, bool lo_open, double hi, bool hi_open) {
    return Setter([&field, lo, lo_open, hi, hi_open, &fail, &number](const std::string& v) {
      auto x = try_parse_double(v);
      const bool ok = x && std::isfinite(*x) && (lo_open ? *x > lo : *x >= lo) && (hi_open ? *x < hi : *x <= hi);
      if (!ok) {
        throw fail(number, "value '" + v + "' is out of range");
      }
      field = *x;
    });
  };
  constexpr double inf = std::numeric_limits<double>::infinity();

  double gamma_value = 0.0;
  double sigma_floor_value = 0.0;
  const std::map<std::string, Setter> setters = {
      {"seed",
       [&](const std::string& v) {
         auto x = parse_int<std::uint64_t>(v);
         if (!x) {
           throw fail(number, "seed must be a non-negative integer");
         }
         cfg.seed = *x;
       }},
      {"threads",
       [&](const std::string& v) {
         auto x = parse_int<std::size_t>(v);
         if (!x) {
           throw fail(number, "threads must be a non-negative integer (0 = all cores)");
         }
         cfg.threads = *x;
       }},
      {"output", [&](const std::string& v) { cfg.output = v; }},
      {"observations", [&](const std::string& v) { cfg.observations = v; }},
      {"offspring",
       [&](const std::string& v) {
         cfg.offspring = v;
         try {
           (void)cfg.offspring_law();
         } catch (const Error& e) {
           throw fail(number, e.what());
         }
       }},
      {"control",
       [&](const std::string& v) {
         if (v != "binomial_xi") {
           try {
             (void)growth_family_from_string(v);
           } catch (const DomainError&) {
             throw fail(number, "unknown control '" + v +
                                    "' (binomial_xi, verhulst, theta_logistic, hassell, gompertz)");
           }
         }
         cfg.control = v;
       }},
      {"shape", real(cfg.shape, 0.0, true, inf, true)},
      {"gamma",
       [&, setter = real(gamma_value, 0.0, true, inf, true)](const std::string& v) {
         setter(v);
         cfg.gamma = gamma_value;
       }},
      {"z0", positive_int(cfg.z0)},
      {"generations", positive_int(cfg.generations)},
      {"kappa_max",
       [&](const std::string& v) {
         auto x = parse_int<int>(v);
         if (!x || *x < 2) {
           throw fail(number, "kappa_max must be an integer >= 2");
         }
         cfg.kappa_max = *x;
       }},
      {"dirichlet_alpha", real(cfg.dirichlet_alpha, 0.0, true, inf, true)},
      {"gamma_prior",
       [&](const std::string& v) {
         auto call = parse_call(v);
         if (!call || call->second.size() != 2 || (call->first != "beta" && call->first != "uniform")) {
           throw fail(number, "gamma_prior must be beta(a,b) or uniform(lo,hi)");
         }
         try {
           cfg.gamma_prior = call->first == "beta" ? ControlPrior::beta(call->second[0], call->second[1])
                                                   : ControlPrior::uniform(call->second[0], call->second[1]);
         } catch (const Error& e) {
           throw fail(number, e.what());
         }
       }},
      {"particles", positive_int(cfg.particles)},
      {"pool_sizes",
       [&](const std::string& v) {
         cfg.pool_sizes.clear();
         for (const auto& item : split(v, ',')) {
           auto x = parse_int<std::size_t>(item);
           if (!x || *x < 1) {
             throw fail(number, "pool_sizes must be a comma-separated list of positive integers");
           }
           cfg.pool_sizes.push_back(*x);
         }
       }},
      {"tuning_a", real(cfg.tuning_a, 0.0, true, inf, true)},
      {"sigma_floor",
       [&, setter = real(sigma_floor_value, 0.0, false, inf, true)](const std::string& v) {
         setter(v);
         cfg.sigma_floor = sigma_floor_value;
       }},
      {"max_discard_factor", real(cfg.max_discard_factor, 1.0, false, inf, true)},
      {"keep_fraction", real(cfg.keep_fraction, 0.0, true, 1.0, false)},
      {"stage2_source",
       [&](const std::string& v) {
         try {
           cfg.stage2_source = stage_two_source_from_string(v);
         } catch (const ConfigError& e) {
           throw fail(number, e.what());
         }
       }},
      {"min_kappa_particles", positive_int(cfg.min_kappa_particles)},
      {"hpd_level", real(cfg.hpd_level, 0.0, true, 1.0, true)},
      {"kde_grid",
       [&](const std::string& v) {
         auto x = parse_int<int>(v);
         if (!x || *x < 2) {
           throw fail(number, "kde_grid must be an integer >= 2");
         }
         cfg.kde_grid = *x;
       }},
      {"kde2d_grid",
       [&](const std::string& v) {
         auto x = parse_int<int>(v);
         if (!x || *x < 2) {
           throw fail(number, "kde2d_grid must be an integer >= 2");
         }
         cfg.kde2d_grid = *x;
       }},
      {"kappa_estimate",
       [&](const std::string& v) {
         if (v == "importance") {
           cfg.kappa_estimate = KappaEstimator::importance;
         } else if (v == "counts") {
           cfg.kappa_estimate = KappaEstimator::counts;
         } else {
           throw fail(number, "kappa_estimate must be 'importance' or 'counts'");
         }
       }},
      {"growth_families",
       [&](const std::string& v) {
         try {
           cfg.growth_families = parse_growth_candidates(v);
         } catch (const Error& e) {
           throw fail(number, e.what());
         }
       }},
      {"replicates", positive_int(cfg.replicates)},
  };

  while (std::getline(in, line)) {
    ++number;
    const std::string stripped = trim(line.substr(0, line.find('#')));
    if (stripped.empty()) {
      continue;
    }
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw fail(number, "expected 'key = value'");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    const auto it = setters.find(key);
    if (it == setters.end()) {
      throw fail(number, "unknown key '" + key + "'");
    }
    if (cfg.lines.count(key)) {
      throw fail(number, "duplicate key '" + key + "' (first set on line " + std::to_string(cfg.lines[key]) + ")");
    }
    if (value.empty()) {
      throw fail(number, "key '" + key + "' has no value");
    }
    it->second(value);
    cfg.lines[key] = number;
  }

  // Cross-key checks, reported at the line of the later key.
  auto line_of = [&](const std::string& key) { return cfg.lines.count(key) ? cfg.lines.at(key) : 0; };
  if (has_shape(cfg.growth_control() ? growth_family_from_string(cfg.control) : GrowthFamily::verhulst) &&
      !cfg.lines.count("shape")) {
    throw fail(line_of("control"), "control '" + cfg.control + "' needs a shape value");
  }
  if (cfg.gamma_prior) {
    const bool uniform = cfg.gamma_prior->kind == ControlPrior::Kind::uniform;
    if (uniform != cfg.growth_control()) {
      throw fail(line_of("gamma_prior"), cfg.growth_control()
                                             ? "growth controls need a uniform(lo,hi) prior on K"
                                             : "binomial_xi control needs a beta(a,b) prior on gamma");
    }
    if (uniform && !(cfg.gamma_prior->a > 0.0)) {
      throw fail(line_of("gamma_prior"), "carrying-capacity prior must be positive");
    }
  }
  if (cfg.gamma && !cfg.growth_control() && !(*cfg.gamma <= 1.0)) {
    throw fail(line_of("gamma"), "gamma must lie in (0,1] for binomial_xi control");
  }
  if (!cfg.pool_sizes.empty()) {
    try {
      (void)ToleranceSchedule::from_pools(cfg.pool_sizes, cfg.particles);
    } catch (const Error& e) {
      throw fail(std::max(line_of("pool_sizes"), line_of("particles")), e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  RunConfig cfg = parse(text, path.string());
  cfg.source = path;
  return cfg;
}

std::uint64_t RunConfig::hash() const {
  std::ostringstream os;
  os << "control=" << control << '\n';
  if (growth_control() && has_shape(growth_family_from_string(control))) {
    os << "shape=" << format_double(shape) << '\n';
  }
  os << "kappa_max=" << kappa_max << '\n';
  os << "dirichlet_alpha=" << format_double(dirichlet_alpha) << '\n';
  os << "gamma_prior=" << format_prior(control_prior()) << '\n';
  os << "particles=" << particles << '\n';
  os << "pool_sizes=" << join_sizes(pool_sizes) << '\n';
  os << "tuning_a=" << format_double(tuning_a) << '\n';
  os << "sigma_floor=" << (sigma_floor ? format_double(*sigma_floor) : "default") << '\n';
  os << "max_discard_factor=" << format_double(max_discard_factor) << '\n';
  return fnv1a(os.str());
}

bool RunConfig::growth_control() const {
  return control != "binomial_xi";
}

ControlLaw RunConfig::control_family() const {
  if (!growth_control()) {
    return ControlLaw::binomial_xi(gamma && *gamma <= 1.0 ? *gamma : 0.5);
  }
  const double k = gamma ? *gamma : (gamma_prior ? gamma_prior->a : 1.0);
  return ControlLaw::density_dependent(growth_family_from_string(control), shape, k);
}

OffspringLaw RunConfig::offspring_law() const {
  if (offspring.empty()) {
    throw ConfigError("config has no 'offspring' law");
  }
  auto call = parse_call(offspring);
  if (!call) {
    throw ConfigError("offspring must look like pmf(p0,...), binomial(n,p) or geometric(q)");
  }
  const auto& [name, args] = *call;
  try {
    if (name == "pmf") {
      return OffspringLaw::finite(args);
    }
    if (name == "geometric" && args.size() == 1) {
      return OffspringLaw::geometric(args[0]);
    }
    if (name == "binomial" && args.size() == 2 && args[0] == std::floor(args[0])) {
      return OffspringLaw::binomial(static_cast<Count>(args[0]), args[1]);
    }
  } catch (const DomainError& e) {
    throw ConfigError(std::string("offspring: ") + e.what());
  }
  throw ConfigError("offspring must look like pmf(p0,...), binomial(n,p) or geometric(q)");
}

ControlPrior RunConfig::control_prior() const {
  if (gamma_prior) {
    return *gamma_prior;
  }
  if (growth_control()) {
    throw ConfigError("growth controls need 'gamma_prior = uniform(lo,hi)' for the carrying capacity");
  }
  return ControlPrior::beta(1.0, 1.0);
}

PriorSpec RunConfig::prior_spec() const {
  return PriorSpec::make(kappa_max, control_prior(), dirichlet_alpha);
}

SmcConfig RunConfig::smc_config() const {
  if (pool_sizes.empty()) {
    throw ConfigError("config has no 'pool_sizes'");
  }
  SmcConfig c;
  c.schedule = ToleranceSchedule::from_pools(pool_sizes, particles);
  c.particles = particles;
  c.tuning_a = tuning_a;
  c.sigma_floor = sigma_floor;
  c.max_attempts_factor = max_discard_factor;
  c.seed = seed;
  c.threads = threads;
  return c;
}

GrowthFitConfig RunConfig::growth_config() const {
  const ControlPrior prior = gamma_prior ? *gamma_prior : ControlPrior{};
  if (!gamma_prior || prior.kind != ControlPrior::Kind::uniform) {
    throw ConfigError("fit-growth needs 'gamma_prior = uniform(lo,hi)' for the carrying capacity");
  }
  GrowthFitConfig g;
  g.family_grid = growth_families;
  g.capacity_lo = prior.a;
  g.capacity_hi = prior.b;
  g.kappa_max = kappa_max;
  g.dirichlet_concentration = dirichlet_alpha;
  g.replicates = replicates;
  g.smc = smc_config();
  g.estimator = kappa_estimate;
  g.keep_fraction = keep_fraction;
  g.stage2_source = stage2_source;
  g.min_kappa_particles = min_kappa_particles;
  g.posterior = posterior_options();
  return g;
}

PosteriorOptions RunConfig::posterior_options() const {
  return PosteriorOptions{kde_grid, kde2d_grid, hpd_level};
}

fs::path RunConfig::observations_path() const {
  if (observations.empty()) {
    throw ConfigError("no observation file given (config key 'observations' or --data)");
  }
  fs::path p(observations);
  if (p.is_relative() && !source.empty()) {
    p = source.parent_path() / p;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Files

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open '" + path.string() + "'");
  }
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw DataError("cannot write '" + tmp.string() + "'");
    }
    out << content;
    if (!out.flush()) {
      throw DataError("write to '" + tmp.string() + "' failed");
    }
  }
  fs::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Observations

ObservedSample parse_observations(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int row = 0;
  bool header_seen = false;
  ObservedSample obs;
  auto fail = [&](const std::string& message) { return ParseError("row " + std::to_string(row) + ": " + message); };

  while (std::getline(in, line)) {
    ++row;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') {
      continue;
    }
    const auto cells = split(stripped, ',');
    if (!header_seen) {
      header_seen = true;
      if (cells.size() == 2 && cells[0] == "index" && cells[1] == "value") {
        continue;
      }
      throw fail("expected header 'index,value'");
    }
    if (cells.size() != 2) {
      throw fail("expected 2 columns, found " + std::to_string(cells.size()));
    }
    if (obs.last_progenitors) {
      throw fail("the phi row must be the last row");
    }
    if (cells[0] == "phi") {
      auto v = parse_int<Count>(cells[1]);
      if (!v) {
        throw fail("phi must be an integer");
      }
      obs.last_progenitors = *v;
      continue;
    }
    auto index = parse_int<int>(cells[0]);
    if (!index || *index != static_cast<int>(obs.sizes.size())) {
      throw fail("index must be " + std::to_string(obs.sizes.size()) + " (consecutive from 0)");
    }
    if (cells[1] == "NA") {
      obs.sizes.emplace_back(std::nullopt);
      continue;
    }
    auto v = parse_int<Count>(cells[1]);
    if (!v) {
      throw fail("value must be an integer or NA, got '" + cells[1] + "'");
    }
    obs.sizes.emplace_back(*v);
  }
  if (obs.sizes.empty()) {
    throw ParseError("observation file has no data rows");
  }
  if (obs.last_progenitors && !obs.sizes.back()) {
    throw ValidationError("phi_{n-1} needs Z_n observed");
  }
  obs.validate();
  return obs;
}

ObservedSample load_observations(const fs::path& path) {
  try {
    return parse_observations(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::string format_observations(const ObservedSample& obs) {
  std::string out = "index,value\n";
  for (std::size_t i = 0; i < obs.sizes.size(); ++i) {
    out += std::to_string(i) + "," + format_optional_count(obs.sizes[i]) + "\n";
  }
  if (obs.last_progenitors) {
    out += "phi," + std::to_string(*obs.last_progenitors) + "\n";
  }
  return out;
}

std::uint64_t observations_hash(const ObservedSample& obs) {
  return fnv1a(format_observations(obs));
}

// ---------------------------------------------------------------------------
// Particle archives

namespace {

constexpr const char* kArchiveMagic = "# cbp-archive v1";
constexpr const char* kAdjustedMagic = "# cbp-adjusted v1";

struct HeaderReader {
  std::map<std::string, std::string> values;
  int lines = 0;

  const std::string& at(const std::string& key) const {
    auto it = values.find(key);
    if (it == values.end()) {
      throw ParseError("header is missing '" + key + "'");
    }
    return it->second;
  }
  template <typename Int>
  Int integer(const std::string& key) const {
    auto v = parse_int<Int>(at(key));
    if (!v) {
      throw ParseError("header '" + key + "' is not an integer");
    }
    return *v;
  }
};

// Reads '# key = value' lines after the magic line; leaves `in` at the column line.
HeaderReader read_header(std::istream& in, const char* magic) {
  HeaderReader h;
  std::string line;
  if (!std::getline(in, line) || trim(line) != magic) {
    throw ParseError(std::string("row 1: expected '") + magic + "'");
  }
  h.lines = 1;
  while (in.peek() == '#') {
    std::getline(in, line);
    ++h.lines;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("row " + std::to_string(h.lines) + ": malformed header line");
    }
    h.values[trim(std::string_view(line).substr(1, eq - 1))] = trim(std::string_view(line).substr(eq + 1));
  }
  return h;
}

} // namespace

fs::path trajectory_sidecar(const fs::path& archive_path) {
  fs::path p = archive_path;
  p += ".traj";
  return p;
}

ParticleArchive make_archive(const IterationResult& result, const SmcProblem& problem, std::uint64_t config_hash,
                             const std::string& run_id) {
  ParticleArchive a;
  a.run_id = run_id;
  a.iteration = result.iteration;
  a.epsilon = result.epsilon;
  a.config_hash = config_hash;
  a.observations_hash = observations_hash(problem.observed);
  a.kappa_max = problem.priors.kappa_max;
  a.attempts = result.attempts;
  a.discarded = result.discarded;
  a.particles = result.particles;
  for (const auto& p : a.particles) {
    const Eigen::VectorXd s = summary(p.trajectory, problem.mask).vector();
    a.summaries.emplace_back(s.data(), s.data() + s.size());
  }
  return a;
}

void save_archive(const fs::path& path, const ParticleArchive& archive) {
  const std::size_t dim = archive.summaries.empty() ? 0 : archive.summaries.front().size();
  std::ostringstream rows;
  rows << kArchiveMagic << '\n';
  rows << "# kind = " << archive.kind << '\n';
  rows << "# run_id = " << archive.run_id << '\n';
  rows << "# iteration = " << archive.iteration << '\n';
  rows << "# epsilon = " << format_double(archive.epsilon) << '\n';
  rows << "# config_hash = " << hex(archive.config_hash) << '\n';
  rows << "# observations_hash = " << hex(archive.observations_hash) << '\n';
  rows << "# kappa_max = " << archive.kappa_max << '\n';
  rows << "# attempts = " << archive.attempts << '\n';
  rows << "# discarded = " << archive.discarded << '\n';
  if (archive.kappa_hat) {
    rows << "# kappa_hat = " << *archive.kappa_hat << '\n';
  }
  rows << "# summary_dim = " << dim << '\n';
  rows << "kappa";
  for (int j = 0; j <= archive.kappa_max; ++j) {
    rows << ",p" << j;
  }
  rows << ",gamma,weight,log_raw_weight,distance";
  for (std::size_t j = 0; j < dim; ++j) {
    rows << ",s" << j + 1;
  }
  rows << ",task,traj_ref\n";

  std::ostringstream traj;
  traj << "traj_ref,extinct_at,saturated,phi_last,sizes\n";
  for (std::size_t i = 0; i < archive.particles.size(); ++i) {
    const Particle& p = archive.particles[i];
    rows << p.kappa;
    for (int j = 0; j <= archive.kappa_max; ++j) {
      rows << ',' << (j < static_cast<int>(p.probs.size()) ? format_double(p.probs[static_cast<std::size_t>(j)]) : "-1");
    }
    rows << ',' << format_double(p.gamma) << ',' << format_double(p.weight) << ','
         << format_double(p.log_raw_weight) << ',' << format_double(p.distance);
    for (double s : archive.summaries.at(i)) {
      rows << ',' << format_double(s);
    }
    rows << ',' << p.task << ',' << i << '\n';

    const Trajectory& t = p.trajectory;
    traj << i << ',' << (t.extinct_at ? std::to_string(*t.extinct_at) : "NA") << ',' << (t.saturated ? 1 : 0) << ','
         << format_optional_count(t.last_progenitors) << ',';
    for (std::size_t k = 0; k < t.sizes.size(); ++k) {
      traj << (k ? " " : "") << t.sizes[k];
    }
    traj << '\n';
  }
  write_file_atomic(trajectory_sidecar(path), traj.str());
  write_file_atomic(path, rows.str());
}

ParticleArchive load_archive(const fs::path& path) {
  std::istringstream in(read_file(path));
  ParticleArchive a;
  HeaderReader h;
  try {
    h = read_header(in, kArchiveMagic);
    a.kind = h.at("kind");
    if (a.kind != "population" && a.kind != "pool") {
      throw ParseError("unknown archive kind '" + a.kind + "'");
    }
    if (h.values.count("kappa_hat")) {
      a.kappa_hat = h.integer<int>("kappa_hat");
    }
    a.run_id = h.at("run_id");
    a.iteration = h.integer<int>("iteration");
    a.epsilon = parse_double(h.at("epsilon"));
    a.config_hash = parse_hex(h.at("config_hash"));
    a.observations_hash = parse_hex(h.at("observations_hash"));
    a.kappa_max = h.integer<int>("kappa_max");
    a.attempts = h.integer<std::size_t>("attempts");
    a.discarded = h.integer<std::size_t>("discarded");
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  const auto dim = h.integer<std::size_t>("summary_dim");
  const std::size_t columns = 1 + static_cast<std::size_t>(a.kappa_max) + 1 + 4 + dim + 2;

  // Trajectories first, keyed by reference.
  std::vector<Trajectory> trajectories;
  {
    std::istringstream tin(read_file(trajectory_sidecar(path)));
    std::string line;
    int row = 1;
    std::getline(tin, line);
    while (std::getline(tin, line)) {
      ++row;
      auto fail = [&](const std::string& m) {
        return ParseError(trajectory_sidecar(path).string() + ": row " + std::to_string(row) + ": " + m);
      };
      const auto cells = split(line, ',');
      if (cells.size() != 5) {
        throw fail("expected 5 columns");
      }
      auto ref = parse_int<std::size_t>(cells[0]);
      if (!ref || *ref != trajectories.size()) {
        throw fail("trajectory references must be consecutive");
      }
      Trajectory t;
      if (cells[1] != "NA") {
        auto v = parse_int<int>(cells[1]);
        if (!v) {
          throw fail("bad extinct_at");
        }
        t.extinct_at = *v;
      }
      t.saturated = cells[2] == "1";
      if (cells[3] != "NA") {
        auto v = parse_int<Count>(cells[3]);
        if (!v) {
          throw fail("bad phi_last");
        }
        t.last_progenitors = *v;
      }
      for (const auto& z : split(cells[4], ' ')) {
        auto v = parse_int<Count>(z);
        if (!v) {
          throw fail("bad size '" + z + "'");
        }
        t.sizes.push_back(*v);
      }
      trajectories.push_back(std::move(t));
    }
  }

  std::string line;
  std::getline(in, line);  // column names
  int row = h.lines + 1;
  while (std::getline(in, line)) {
    ++row;
    auto fail = [&](const std::string& m) {
      return ParseError(path.string() + ": row " + std::to_string(row) + ": " + m);
    };
    if (trim(line).empty()) {
      continue;
    }
    const auto cells = split(line, ',');
    if (cells.size() != columns) {
      throw fail("expected " + std::to_string(columns) + " columns, found " + std::to_string(cells.size()));
    }
    try {
      Particle p;
      std::size_t c = 0;
      auto kappa = parse_int<int>(cells[c++]);
      if (!kappa || *kappa < 2 || *kappa > a.kappa_max) {
        throw fail("kappa out of range");
      }
      p.kappa = *kappa;
      for (int j = 0; j <= a.kappa_max; ++j) {
        const double v = parse_double(cells[c++]);
        if (j <= p.kappa) {
          p.probs.push_back(v);
        } else if (v != -1.0) {
          throw fail("probabilities beyond kappa must hold the -1 sentinel");
        }
      }
      p.gamma = parse_double(cells[c++]);
      p.weight = parse_double(cells[c++]);
      p.log_raw_weight = parse_double(cells[c++]);
      p.distance = parse_double(cells[c++]);
      std::vector<double> s;
      for (std::size_t j = 0; j < dim; ++j) {
        s.push_back(parse_double(cells[c++]));
      }
      auto task = parse_int<std::uint64_t>(cells[c++]);
      auto ref = parse_int<std::size_t>(cells[c++]);
      if (!task || !ref || *ref >= trajectories.size()) {
        throw fail("bad task or trajectory reference");
      }
      p.task = *task;
      p.trajectory = trajectories[*ref];
      a.particles.push_back(std::move(p));
      a.summaries.push_back(std::move(s));
    } catch (const ParseError& e) {
      if (std::string_view(e.what()).find("row ") != std::string_view::npos) {
        throw;
      }
      throw fail(e.what());
    }
  }
  return a;
}

// ---------------------------------------------------------------------------
// Result files

std::string format_trajectory(const Trajectory& t) {
  std::string out = "generation,size,phi_last\n";
  for (std::size_t k = 0; k < t.sizes.size(); ++k) {
    const bool last_parent = k + 2 == t.sizes.size();
    out += std::to_string(k) + "," + std::to_string(t.sizes[k]) + "," +
           (last_parent ? format_optional_count(t.last_progenitors) : "") + "\n";
  }
  return out;
}

std::string format_kappa_pmf(const KappaPosterior& post) {
  std::ostringstream os;
  os << "# mean = " << format_double(post.mean) << '\n';
  os << "# kappa_hat = " << post.point_estimate << '\n';
  os << "kappa,probability,count\n";
  for (std::size_t k = 2; k < post.pmf.size(); ++k) {
    os << k << ',' << format_double(post.pmf[k]) << ',' << post.counts[k] << '\n';
  }
  return os.str();
}

std::string format_adjusted(const AdjustedSample& sample) {
  std::ostringstream os;
  os << kAdjustedMagic << '\n';
  os << "# kappa = " << sample.kappa << '\n';
  os << "# status = " << to_string(sample.status) << '\n';
  os << "# rejected = " << sample.rejected_count << '\n';
  os << "# derived = " << sample.derived_name << '\n';
  os << "# renormalized = " << (sample.renormalized ? "true" : "false") << '\n';
  for (int j = 0; j <= sample.kappa; ++j) {
    os << 'p' << j << ',';
  }
  os << (sample.derived_name == "k_e" ? "k" : "gamma") << ",m," << sample.derived_name << ",weight,raw_sum\n";
  for (const auto& r : sample.rows) {
    for (double p : r.probs) {
      os << format_double(p) << ',';
    }
    os << format_double(r.gamma) << ',' << format_double(r.m) << ',' << format_double(r.derived) << ','
       << format_double(r.weight) << ',' << format_double(r.raw_sum) << '\n';
  }
  return os.str();
}

AdjustedSample parse_adjusted(const std::string& text) {
  std::istringstream in(text);
  const HeaderReader h = read_header(in, kAdjustedMagic);
  AdjustedSample s;
  s.kappa = h.integer<int>("kappa");
  s.rejected_count = h.integer<std::size_t>("rejected");
  s.derived_name = h.at("derived");
  const std::string& renormalized = h.at("renormalized");
  if (renormalized != "true" && renormalized != "false") {
    throw ParseError("header 'renormalized' must be true or false");
  }
  s.renormalized = renormalized == "true";
  const std::string& status = h.at("status");
  if (status == "adjusted") {
    s.status = AdjustStatus::adjusted;
  } else if (status == "no_variation") {
    s.status = AdjustStatus::no_variation;
  } else if (status == "singular") {
    s.status = AdjustStatus::singular;
  } else {
    throw ParseError("unknown adjustment status '" + status + "'");
  }
  std::string line;
  std::getline(in, line);
  int row = h.lines + 1;
  const std::size_t columns = static_cast<std::size_t>(s.kappa) + 1 + 5;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) {
      continue;
    }
    const auto cells = split(line, ',');
    if (cells.size() != columns) {
      throw ParseError("row " + std::to_string(row) + ": expected " + std::to_string(columns) + " columns");
    }
    AdjustedRow r;
    std::size_t c = 0;
    for (int j = 0; j <= s.kappa; ++j) {
      r.probs.push_back(parse_double(cells[c++]));
    }
    r.gamma = parse_double(cells[c++]);
    r.m = parse_double(cells[c++]);
    r.derived = parse_double(cells[c++]);
    r.weight = parse_double(cells[c++]);
    r.raw_sum = parse_double(cells[c++]);
    s.rows.push_back(std::move(r));
  }
  return s;
}

std::string format_density(const DensityEstimate& d) {
  std::ostringstream os;
  os << "# bandwidth = " << format_double(d.bandwidth) << '\n';
  os << "x,density\n";
  for (Eigen::Index i = 0; i < d.grid.size(); ++i) {
    os << format_double(d.grid[i]) << ',' << format_double(d.density[i]) << '\n';
  }
  return os.str();
}

std::string format_density_2d(const DensityGrid2D& d, const std::string& x_name, const std::string& y_name) {
  std::ostringstream os;
  os << x_name << ',' << y_name << ",density\n";
  for (Eigen::Index i = 0; i < d.x.size(); ++i) {
    for (Eigen::Index j = 0; j < d.y.size(); ++j) {
      os << format_double(d.x[i]) << ',' << format_double(d.y[j]) << ',' << format_double(d.density(i, j)) << '\n';
    }
  }
  return os.str();
}

std::string format_posterior_summary(const PosteriorSummary& post, const AdjustedSample& sample) {
  std::ostringstream os;
  os << "kappa = " << post.kappa << '\n';
  os << "adjustment = " << to_string(sample.status) << '\n';
  os << "rows = " << sample.rows.size() << '\n';
  os << "rejected = " << sample.rejected_count << '\n';
  for (std::size_t j = 0; j < post.mean_probs.size(); ++j) {
    os << 'p' << j << ".mean = " << format_double(post.mean_probs[j]) << '\n';
  }
  for (const auto& p : post.parameters) {
    os << p.name << ".mean = " << format_double(p.mean) << '\n';
    os << p.name << ".hpd_level = " << format_double(p.interval.level) << '\n';
    os << p.name << ".hpd_lo = " << format_double(p.interval.lo) << '\n';
    os << p.name << ".hpd_hi = " << format_double(p.interval.hi) << '\n';
    os << p.name << ".hpd_mass = " << format_double(p.interval.mass) << '\n';
    os << p.name << ".hpd_disconnected = " << (p.interval.disconnected ? "true" : "false") << '\n';
    os << p.name << ".bandwidth = " << format_double(p.density.bandwidth) << '\n';
  }
  return os.str();
}

std::string format_fit_scores(const std::vector<FitScore>& scores) {
  std::ostringstream os;
  os << "family,shape,r2g,kappa,m_mean,k_mean,k_e_mean\n";
  for (const auto& s : scores) {
    os << to_string(s.candidate.family) << ',' << format_double(s.candidate.shape) << ',' << format_double(s.r2g)
       << ',' << s.kappa << ',' << format_double(s.m_mean) << ',' << format_double(s.capacity_mean) << ','
       << format_double(s.equilibrium_mean) << '\n';
  }
  return os.str();
}

std::string format_expected_trajectory(const ObservedSample& obs, const FitScore& score) {
  std::ostringstream os;
  os << "index,observed,expected\n";
  for (std::size_t i = 0; i < obs.sizes.size(); ++i) {
    const double e = score.expected_trajectory.at(i);
    os << i << ',' << format_optional_count(obs.sizes[i]) << ',' << (std::isfinite(e) ? format_double(e) : "NA")
       << '\n';
  }
  return os.str();
}

} // namespace cbp
