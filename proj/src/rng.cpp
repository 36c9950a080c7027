#include "cbp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace cbp {

Rng substream(std::uint64_t master_seed, std::uint64_t stream, std::uint64_t task) {
  auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
  auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(master_seed), hi(master_seed), lo(stream), hi(stream), lo(task), hi(task)};
  return Rng(seq);
}

double uniform01(Rng& rng) {
  // (0,1) open interval: generate_canonical may return 0.
  double u = 0.0;
  while (u <= 0.0 || u >= 1.0) {
    u = std::generate_canonical<double, 53>(rng);
  }
  return u;
}

double sample_log_gamma(double shape, Rng& rng) {
  if (shape >= 1.0) {
    std::gamma_distribution<double> g(shape, 1.0);
    double x = g(rng);
    while (x <= 0.0) {
      x = g(rng);
    }
    return std::log(x);
  }
  // Gamma(a) = Gamma(a + 1) * U^(1/a)
  std::gamma_distribution<double> g(shape + 1.0, 1.0);
  double x = g(rng);
  while (x <= 0.0) {
    x = g(rng);
  }
  return std::log(x) + std::log(uniform01(rng)) / shape;
}

std::vector<double> sample_dirichlet(std::span<const double> alpha, Rng& rng) {
  std::vector<double> logs(alpha.size());
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    logs[i] = sample_log_gamma(alpha[i], rng);
  }
  const double top = *std::max_element(logs.begin(), logs.end());
  std::vector<double> out(alpha.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    out[i] = std::exp(logs[i] - top);
    sum += out[i];
  }
  for (double& v : out) {
    v /= sum;
  }
  return out;
}

double sample_beta(double a, double b, Rng& rng) {
  const double la = sample_log_gamma(a, rng);
  const double lb = sample_log_gamma(b, rng);
  // x = Ga / (Ga + Gb) computed as a logistic of the log difference.
  const double d = lb - la;
  double x = 1.0 / (1.0 + std::exp(d));
  // Keep draws strictly inside the support.
  constexpr double tiny = std::numeric_limits<double>::min();
  return std::clamp(x, tiny, 1.0 - std::numeric_limits<double>::epsilon() / 2);
}

} // namespace cbp
