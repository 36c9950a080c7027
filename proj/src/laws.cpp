#include "cbp/laws.hpp"

#include "cbp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace cbp {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

Count draw_binomial(Count n, double p, Rng& rng) {
  if (n <= 0 || p <= 0.0) {
    return 0;
  }
  if (p >= 1.0) {
    return n;
  }
  std::binomial_distribution<Count> dist(n, p);
  return dist(rng);
}

} // namespace

// ---------------------------------------------------------------------------

OffspringLaw OffspringLaw::finite(std::vector<double> probs) {
  if (probs.size() < 3) {
    throw DomainError("finite offspring pmf needs kappa >= 2 (at least 3 probabilities)");
  }
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw DomainError("finite offspring pmf has a negative or non-finite entry");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    std::ostringstream os;
    os << "finite offspring pmf sums to " << sum << ", expected 1";
    throw DomainError(os.str());
  }
  FinitePmf pmf{std::move(probs), {}};
  pmf.tail.assign(pmf.probs.size(), 0.0);
  double acc = 0.0;
  for (std::size_t j = pmf.probs.size(); j-- > 0;) {
    acc += pmf.probs[j];
    pmf.tail[j] = acc;
  }
  return OffspringLaw(std::move(pmf));
}

OffspringLaw OffspringLaw::geometric(double q) {
  if (!(q > 0.0 && q < 1.0)) {
    throw DomainError("geometric offspring parameter must lie in (0,1)");
  }
  return OffspringLaw(Geometric{q});
}

OffspringLaw OffspringLaw::binomial(Count size, double success) {
  if (size < 1 || !(success >= 0.0 && success <= 1.0)) {
    throw DomainError("binomial offspring law needs size >= 1 and success in [0,1]");
  }
  return OffspringLaw(Binomial{size, success});
}

std::string OffspringLaw::describe() const {
  std::ostringstream os;
  std::visit(overloaded{
                 [&](const FinitePmf& f) {
                   os << "pmf(";
                   for (std::size_t i = 0; i < f.probs.size(); ++i) {
                     os << (i ? "," : "") << f.probs[i];
                   }
                   os << ")";
                 },
                 [&](const Geometric& g) { os << "geometric(" << g.q << ")"; },
                 [&](const Binomial& b) { os << "binomial(" << b.size << "," << b.success << ")"; },
             },
             law_);
  return os.str();
}

double offspring_mean(const OffspringLaw& law) {
  return std::visit(overloaded{
                        [](const FinitePmf& f) {
                          double m = 0.0;
                          for (std::size_t j = 1; j < f.probs.size(); ++j) {
                            m += static_cast<double>(j) * f.probs[j];
                          }
                          return m;
                        },
                        [](const Geometric& g) { return (1.0 - g.q) / g.q; },
                        [](const Binomial& b) { return static_cast<double>(b.size) * b.success; },
                    },
                    law.variant());
}

Count sample_offspring_sum(const OffspringLaw& law, Count count, Rng& rng) {
  if (count <= 0) {
    return 0;
  }
  return std::visit(overloaded{
                        [&](const FinitePmf& f) {
                          Count remaining = count;
                          Count total = 0;
                          const std::size_t cells = f.probs.size();
                          for (std::size_t j = 0; j + 1 < cells && remaining > 0; ++j) {
                            if (f.probs[j] <= 0.0) {
                              continue;
                            }
                            const double cond = f.tail[j] > 0.0 ? std::min(1.0, f.probs[j] / f.tail[j]) : 1.0;
                            const Count c = draw_binomial(remaining, cond, rng);
                            total += static_cast<Count>(j) * c;
                            remaining -= c;
                          }
                          total += static_cast<Count>(cells - 1) * remaining;
                          return total;
                        },
                        [&](const Geometric& g) {
                          std::negative_binomial_distribution<Count> nb(count, g.q);
                          return nb(rng);
                        },
                        [&](const Binomial& b) { return draw_binomial(count * b.size, b.success, rng); },
                    },
                    law.variant());
}

double offspring_cdf(const OffspringLaw& law, Count k) {
  if (k < 0) {
    return 0.0;
  }
  return std::visit(overloaded{
                        [&](const FinitePmf& f) {
                          double acc = 0.0;
                          for (Count j = 0; j <= k && j < static_cast<Count>(f.probs.size()); ++j) {
                            acc += f.probs[static_cast<std::size_t>(j)];
                          }
                          return std::min(acc, 1.0);
                        },
                        [&](const Geometric& g) { return 1.0 - std::pow(1.0 - g.q, static_cast<double>(k + 1)); },
                        [&](const Binomial& b) {
                          double acc = 0.0;
                          for (Count j = 0; j <= std::min(k, b.size); ++j) {
                            const double lc = std::lgamma(b.size + 1.0) - std::lgamma(j + 1.0) - std::lgamma(b.size - j + 1.0);
                            acc += std::exp(lc + j * std::log(b.success) + (b.size - j) * std::log1p(-b.success));
                          }
                          return std::min(acc, 1.0);
                        },
                    },
                    law.variant());
}

OffspringLaw binomial_as_finite(int size, double success) {
  std::vector<double> probs(static_cast<std::size_t>(size) + 1);
  for (int j = 0; j <= size; ++j) {
    const double lc = std::lgamma(size + 1.0) - std::lgamma(j + 1.0) - std::lgamma(size - j + 1.0);
    probs[static_cast<std::size_t>(j)] = std::exp(lc + j * std::log(success) + (size - j) * std::log1p(-success));
  }
  const double sum = std::accumulate(probs.begin(), probs.end(), 0.0);
  for (double& p : probs) {
    p /= sum;
  }
  return OffspringLaw::finite(std::move(probs));
}

// ---------------------------------------------------------------------------

Count default_xi(Count j) {
  if (j <= 0) {
    return 0;
  }
  // epsilon guard against ln(e^k) landing just below an integer
  return j + static_cast<Count>(std::floor(std::log(static_cast<double>(j)) + 1e-12));
}

std::string to_string(GrowthFamily f) {
  switch (f) {
  case GrowthFamily::verhulst:
    return "verhulst";
  case GrowthFamily::theta_logistic:
    return "theta_logistic";
  case GrowthFamily::hassell:
    return "hassell";
  case GrowthFamily::gompertz:
    return "gompertz";
  }
  return "unknown";
}

GrowthFamily growth_family_from_string(const std::string& name) {
  if (name == "verhulst") {
    return GrowthFamily::verhulst;
  }
  if (name == "theta_logistic") {
    return GrowthFamily::theta_logistic;
  }
  if (name == "hassell") {
    return GrowthFamily::hassell;
  }
  if (name == "gompertz") {
    return GrowthFamily::gompertz;
  }
  throw DomainError("unknown growth family '" + name + "'");
}

bool has_shape(GrowthFamily f) {
  return f == GrowthFamily::theta_logistic || f == GrowthFamily::hassell;
}

ControlLaw ControlLaw::binomial_xi(double gamma, SizeMap xi) {
  // gamma = 1 is admitted as the deterministic boundary case (phi = xi(z)).
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw DomainError("binomial control parameter gamma must lie in (0,1]");
  }
  if (!xi) {
    throw DomainError("binomial control needs a size map");
  }
  if (xi(0) != 0) {
    throw DomainError("control size map must satisfy xi(0) = 0");
  }
  return ControlLaw(BinomialXi{gamma, std::move(xi)});
}

ControlLaw ControlLaw::density_dependent(GrowthFamily family, double shape, double capacity) {
  if (!(capacity > 0.0) || !std::isfinite(capacity)) {
    throw DomainError("carrying capacity K must be positive");
  }
  if (has_shape(family) && !(shape > 0.0)) {
    throw DomainError(to_string(family) + " requires a positive shape parameter");
  }
  return ControlLaw(DensityDependent{family, has_shape(family) ? shape : 0.0, capacity});
}

double ControlLaw::parameter() const {
  return std::visit(overloaded{
                        [](const BinomialXi& b) { return b.gamma; },
                        [](const DensityDependent& d) { return d.capacity; },
                    },
                    law_);
}

ControlLaw ControlLaw::with_parameter(double value) const {
  return std::visit(overloaded{
                        [&](const BinomialXi& b) { return binomial_xi(value, b.xi); },
                        [&](const DensityDependent& d) { return density_dependent(d.family, d.shape, value); },
                    },
                    law_);
}

double growth_success(GrowthFamily family, double shape, double m, double z, double capacity) {
  const double density = z / capacity;
  switch (family) {
  case GrowthFamily::verhulst:
    return 1.0 - density;
  case GrowthFamily::theta_logistic:
    return std::pow(m, -std::pow(density, shape));
  case GrowthFamily::hassell:
    return std::pow(1.0 + (m - 1.0) * density, -shape);
  case GrowthFamily::gompertz:
    return std::pow(m, -std::log(z + 1.0) / std::log(capacity + 1.0));
  }
  return 0.0;
}

double equilibrium(GrowthFamily family, double shape, double m, double capacity) {
  switch (family) {
  case GrowthFamily::verhulst:
    return (1.0 - 1.0 / m) * capacity;
  case GrowthFamily::hassell:
    return capacity * std::expm1(std::log(m) / shape) / (m - 1.0);
  case GrowthFamily::theta_logistic:
  case GrowthFamily::gompertz:
    return capacity;
  }
  return capacity;
}

void require_supercritical_mean(const ControlLaw& law, double m) {
  if (law.is_density_dependent() && !(m > 1.0)) {
    throw DomainError("density-dependent control laws require offspring mean m > 1");
  }
}

double progenitor_probability(const ControlLaw& law, Count z, double m) {
  return std::visit(overloaded{
                        [](const BinomialXi& b) { return b.gamma; },
                        [&](const DensityDependent& d) {
                          const double s = growth_success(d.family, d.shape, m, static_cast<double>(z), d.capacity);
                          return std::isfinite(s) ? std::clamp(s, 0.0, 1.0) : 0.0;
                        },
                    },
                    law.variant());
}

Count control_trials(const ControlLaw& law, Count z) {
  return std::visit(overloaded{
                        [&](const BinomialXi& b) { return b.xi(z); },
                        [&](const DensityDependent&) { return z; },
                    },
                    law.variant());
}

double control_mean(const ControlLaw& law, Count z, double m) {
  if (z < 0) {
    throw DomainError("population size must be non-negative");
  }
  require_supercritical_mean(law, m);
  return static_cast<double>(control_trials(law, z)) * progenitor_probability(law, z, m);
}

double tau(const ControlLaw& law) {
  if (law.is_density_dependent()) {
    throw DomainError("tau is degenerate (zero) for density-dependent control laws");
  }
  return std::get<BinomialXi>(law.variant()).gamma;
}

double tau_inverse(const ControlLaw& law, double u) {
  if (law.is_density_dependent()) {
    throw DomainError("tau has no inverse for density-dependent control laws");
  }
  if (!(u > 0.0 && u < 1.0)) {
    throw DomainError("tau inverse is defined on (0,1) only");
  }
  return u;
}

double tau_derivative(const ControlLaw& law, double) {
  if (law.is_density_dependent()) {
    throw DomainError("tau is degenerate (zero) for density-dependent control laws");
  }
  return 1.0;
}

Count sample_progenitors(const ControlLaw& law, Count z, double m, Rng& rng) {
  return draw_binomial(control_trials(law, z), progenitor_probability(law, z, m), rng);
}

} // namespace cbp
