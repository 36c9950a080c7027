#pragma once

#include "cbp/laws.hpp"

#include <optional>
#include <vector>

namespace cbp {

/// One realised path Z_0..Z_n of a controlled branching process.
struct Trajectory {
  std::vector<Count> sizes;
  std::optional<Count> last_progenitors;  // phi_{n-1}(Z_{n-1})
  std::optional<int> extinct_at;          // first generation with Z_k = 0
  bool saturated = false;                 // growth stopped at the size cap

  int generations() const { return static_cast<int>(sizes.size()) - 1; }
  bool operator==(const Trajectory&) const = default;
};

/// Observed data. Missing generations are std::nullopt.
struct ObservedSample {
  std::vector<std::optional<Count>> sizes;
  std::optional<Count> last_progenitors;

  int generations() const { return static_cast<int>(sizes.size()) - 1; }
  std::size_t observed_count() const;

  /// Throws ValidationError naming the violated invariant.
  void validate() const;

  static ObservedSample from_trajectory(const Trajectory& t, bool with_progenitors = true);
};

/// Populations above this size stop being simulated; the remaining generations
/// are filled with the cap. Such paths are so far from any realistic
/// observation that their distance is never competitive.
inline constexpr Count kSizeCap = Count{1} << 50;

/// Simulates Z_{k+1} = sum_{j=1}^{phi_k(Z_k)} X_{kj} for n generations.
/// Density-dependent controls receive offspring_mean(offspring) each step.
Trajectory simulate(const OffspringLaw& offspring, const ControlLaw& control, Count z0, int n, Rng& rng);

/// One generation from state z: returns (phi, Z_next).
std::pair<Count, Count> step(const OffspringLaw& offspring, const ControlLaw& control, double m, Count z, Rng& rng);

} // namespace cbp
