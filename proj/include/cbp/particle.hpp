#pragma once

#include "cbp/simulate.hpp"

#include <cstdint>
#include <vector>

namespace cbp {

/// A parameter draw (kappa, p(kappa), gamma) with its importance weight and
/// the path it generated.
struct Particle {
  int kappa = 0;
  std::vector<double> probs;  // kappa + 1 entries on the simplex
  double gamma = 0.0;         // gamma, or the carrying capacity K for growth laws
  double weight = 0.0;        // normalised within its kappa-group
  double log_raw_weight = 0.0;  // log of prior / proposal, before normalisation
  double distance = 0.0;
  std::uint64_t task = 0;     // pool task index; tie-break for equal distances
  Trajectory trajectory;

  bool operator==(const Particle&) const = default;
};

double particle_mean(const Particle& p);

} // namespace cbp
