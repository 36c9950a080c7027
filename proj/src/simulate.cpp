#include "cbp/simulate.hpp"

#include "cbp/errors.hpp"

#include <algorithm>
#include <string>

namespace cbp {

std::size_t ObservedSample::observed_count() const {
  return static_cast<std::size_t>(std::count_if(sizes.begin(), sizes.end(), [](const auto& v) { return v.has_value(); }));
}

void ObservedSample::validate() const {
  if (sizes.empty() || !sizes.front().has_value()) {
    throw ValidationError("Z_0 must be observed");
  }
  if (*sizes.front() < 1) {
    throw ValidationError("Z_0 must be at least 1");
  }
  if (observed_count() < 2) {
    throw ValidationError("at least 2 observed generations are required");
  }
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] && *sizes[i] < 0) {
      throw ValidationError("generation " + std::to_string(i) + " has a negative size");
    }
  }
  if (last_progenitors) {
    if (*last_progenitors < 0) {
      throw ValidationError("phi_{n-1} must be non-negative");
    }
    if (*last_progenitors == 0 && sizes.back() && *sizes.back() != 0) {
      throw ValidationError("phi_{n-1} = 0 requires Z_n = 0");
    }
  }
}

ObservedSample ObservedSample::from_trajectory(const Trajectory& t, bool with_progenitors) {
  ObservedSample obs;
  obs.sizes.assign(t.sizes.begin(), t.sizes.end());
  if (with_progenitors) {
    obs.last_progenitors = t.last_progenitors;
  }
  return obs;
}

std::pair<Count, Count> step(const OffspringLaw& offspring, const ControlLaw& control, double m, Count z, Rng& rng) {
  const Count phi = sample_progenitors(control, z, m, rng);
  return {phi, sample_offspring_sum(offspring, phi, rng)};
}

Trajectory simulate(const OffspringLaw& offspring, const ControlLaw& control, Count z0, int n, Rng& rng) {
  if (z0 < 1 || n < 1) {
    throw DomainError("simulate needs z0 >= 1 and n >= 1");
  }
  const double m = offspring_mean(offspring);
  require_supercritical_mean(control, m);

  Trajectory t;
  t.sizes.assign(static_cast<std::size_t>(n) + 1, 0);
  t.sizes[0] = z0;
  Count z = z0;
  for (int k = 0; k < n; ++k) {
    if (z == 0) {
      break;
    }
    if (z > kSizeCap) {
      t.saturated = true;
      std::fill(t.sizes.begin() + k + 1, t.sizes.end(), kSizeCap);
      if (k + 1 == n) {
        t.last_progenitors = kSizeCap;
      }
      break;
    }
    const auto [phi, next] = step(offspring, control, m, z, rng);
    if (k + 1 == n) {
      t.last_progenitors = phi;
    }
    z = next;
    t.sizes[static_cast<std::size_t>(k) + 1] = z;
    if (z == 0) {
      t.extinct_at = k + 1;
    }
  }
  if (!t.last_progenitors) {
    t.last_progenitors = t.saturated ? kSizeCap : 0;
  }
  return t;
}

} // namespace cbp
