#pragma once

#include "cbp/rng.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace cbp {

using Count = std::int64_t;

// ---------------------------------------------------------------------------
// Offspring laws
// ---------------------------------------------------------------------------

/// Finite-support pmf on {0, ..., kappa}.
struct FinitePmf {
  std::vector<double> probs;
  std::vector<double> tail;  // tail[j] = sum_{i >= j} probs[i], for conditional binomials

  int kappa() const { return static_cast<int>(probs.size()) - 1; }
};

/// P(X = k) = q (1 - q)^k, k >= 0.
struct Geometric {
  double q;
};

struct Binomial {
  Count size;
  double success;
};

class OffspringLaw {
public:
  using Variant = std::variant<FinitePmf, Geometric, Binomial>;

  // Validating factories; throw DomainError when an invariant is violated.
  static OffspringLaw finite(std::vector<double> probs);
  static OffspringLaw geometric(double q);
  static OffspringLaw binomial(Count size, double success);

  const Variant& variant() const { return law_; }
  std::string describe() const;

private:
  explicit OffspringLaw(Variant v) : law_(std::move(v)) {}
  Variant law_;
};

double offspring_mean(const OffspringLaw& law);

/// Draws X_1 + ... + X_count. Uses exact shortcuts: a binomial sum is binomial,
/// a geometric sum is negative binomial, and a finite pmf is split into
/// multinomial cell counts by conditional binomials (O(kappa) per call).
Count sample_offspring_sum(const OffspringLaw& law, Count count, Rng& rng);

/// CDF of the law at k (P(X <= k)).
double offspring_cdf(const OffspringLaw& law, Count k);

/// Truncates a binomial(size, success) law to a FinitePmf with kappa = size.
OffspringLaw binomial_as_finite(int size, double success);

// ---------------------------------------------------------------------------
// Control laws
// ---------------------------------------------------------------------------

using SizeMap = std::function<Count(Count)>;

/// xi(j) = j + floor(ln j), xi(0) = 0.
Count default_xi(Count j);

enum class GrowthFamily { verhulst, theta_logistic, hassell, gompertz };

std::string to_string(GrowthFamily f);
GrowthFamily growth_family_from_string(const std::string& name);
bool has_shape(GrowthFamily f);

/// phi(z) ~ Binomial(xi(z), gamma)
struct BinomialXi {
  double gamma;
  SizeMap xi;
};

/// phi(z) ~ Binomial(z, clamp(s(m, z, K), 0, 1)); shape is theta or beta.
struct DensityDependent {
  GrowthFamily family;
  double shape;
  double capacity;
};

class ControlLaw {
public:
  using Variant = std::variant<BinomialXi, DensityDependent>;

  static ControlLaw binomial_xi(double gamma, SizeMap xi = default_xi);
  static ControlLaw density_dependent(GrowthFamily family, double shape, double capacity);

  const Variant& variant() const { return law_; }
  bool is_density_dependent() const { return std::holds_alternative<DensityDependent>(law_); }

  /// The scalar control parameter: gamma for BinomialXi, K for growth laws.
  double parameter() const;
  /// Same law with a different control parameter.
  ControlLaw with_parameter(double value) const;

private:
  explicit ControlLaw(Variant v) : law_(std::move(v)) {}
  Variant law_;
};

/// Raw success probability s(m, z, K) before clamping.
double growth_success(GrowthFamily family, double shape, double m, double z, double capacity);

/// Equilibrium K_e solving m z s(m, z, K) = z.
double equilibrium(GrowthFamily family, double shape, double m, double capacity);

/// Throws DomainError when m <= 1 for a density-dependent law.
void require_supercritical_mean(const ControlLaw& law, double m);

/// Progenitor success probability used by the simulator, always in [0,1].
double progenitor_probability(const ControlLaw& law, Count z, double m);

/// Number of binomial trials for state z.
Count control_trials(const ControlLaw& law, Count z);

/// E[phi(z)]. m is used only by density-dependent laws.
double control_mean(const ControlLaw& law, Count z, double m);

/// tau = lim eps(k)/k. Defined for BinomialXi only (equals gamma).
double tau(const ControlLaw& law);
/// Inverse of tau for the BinomialXi family: identity on (0,1).
double tau_inverse(const ControlLaw& law, double u);
/// d tau / d gamma for the BinomialXi family.
double tau_derivative(const ControlLaw& law, double gamma);

Count sample_progenitors(const ControlLaw& law, Count z, double m, Rng& rng);

} // namespace cbp
