#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fedminimax {

/// Step sizes and momentum parameters, held constant over the horizon.
struct StepSchedule {
  double eta_x = 0.0;
  double eta_y = 0.0;
  double alpha = 1.0;   // momentum mixing weight
  double beta_x = 1.0;  // direction-update gain, x block
  double beta_y = 1.0;

  /// Throws std::invalid_argument on negative steps, alpha outside (0,1],
  /// nonpositive beta, or (when `momentum`) alpha*beta > 1.
  void validate(bool momentum) const;
};

/// Averaging interval tau, optional snapshot interval S, horizon T.
struct SyncSchedule {
  int tau = 1;
  std::optional<int> s_interval;
  std::int64_t horizon_T = 1;

  /// Throws std::invalid_argument unless tau >= 1, T >= 1, T % tau == 0 and
  /// S (when present) is a positive multiple of tau.
  void validate() const;

  std::int64_t communication_rounds() const { return horizon_T / tau; }
};

enum class TheoremId { kT1, kT2, kT3 };

struct TheoremSchedule {
  StepSchedule step;
  SyncSchedule sync;
  std::vector<std::string> warnings;
};

/// Step/sync parameters prescribed by the convergence theorems with all
/// Theta-constants equal to one:
///   T1: eta_y = sqrt(n / (L T)), eta_x = eta_y / (8 kappa^2),
///       tau = max(1, floor(T^{1/4} / n^{3/4}))
///   T2: alpha = sqrt(n / T), beta = 3, eta's constant in T and scaled so
///       that alpha * eta matches the T1 step
///   T3: eta_x = n^{1/4} / T^{3/4}, eta_y = n^{3/4} / T^{1/4}, both capped at
///       1 / (8 L tau); tau = max(1, floor(T^{1/8} / n^{7/8}));
///       S = ceil(sqrt(T / n)) rounded up to a multiple of tau.
/// tau is lowered to the largest divisor of T not above the formula value.
TheoremSchedule schedule_from_theorem(TheoremId theorem, int n, std::int64_t T,
                                      double L_f, double kappa);

const char* to_string(TheoremId id);
TheoremId theorem_from_string(const std::string& s);

}  // namespace fedminimax
