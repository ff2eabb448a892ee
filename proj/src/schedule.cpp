#include "fedminimax/schedule.hpp"

#include <cmath>
#include <stdexcept>

namespace fedminimax {

void StepSchedule::validate(bool momentum) const {
  if (!(eta_x >= 0.0) || !(eta_y >= 0.0) || !std::isfinite(eta_x) ||
      !std::isfinite(eta_y)) {
    throw std::invalid_argument("step sizes must be finite and nonnegative");
  }
  if (!momentum) return;
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("alpha must lie in (0, 1]");
  }
  if (!(beta_x > 0.0) || !(beta_y > 0.0)) {
    throw std::invalid_argument("beta_x and beta_y must be positive");
  }
  if (alpha * beta_x > 1.0 || alpha * beta_y > 1.0) {
    throw std::invalid_argument(
        "alpha * beta must not exceed 1 (direction update must be a convex "
        "combination)");
  }
}

void SyncSchedule::validate() const {
  if (tau < 1) throw std::invalid_argument("tau must be >= 1");
  if (horizon_T < 1) throw std::invalid_argument("T must be >= 1");
  if (horizon_T % tau != 0) {
    throw std::invalid_argument("T must be divisible by tau");
  }
  if (s_interval) {
    if (*s_interval < 1) throw std::invalid_argument("S must be >= 1");
    if (*s_interval % tau != 0) {
      throw std::invalid_argument("S must be a multiple of tau");
    }
  }
}

namespace {

int largest_divisor_at_most(std::int64_t T, int cap) {
  for (int d = cap; d > 1; --d) {
    if (T % d == 0) return d;
  }
  return 1;
}

int tau_from_power(double value, std::int64_t T,
                   std::vector<std::string>& warnings) {
  const int raw = std::max(1, static_cast<int>(std::floor(value)));
  const int tau = largest_divisor_at_most(T, raw);
  if (tau != raw) {
    warnings.push_back("tau lowered from " + std::to_string(raw) + " to " +
                       std::to_string(tau) + " so that it divides T");
  }
  return tau;
}

}  // namespace

TheoremSchedule schedule_from_theorem(TheoremId theorem, int n, std::int64_t T,
                                      double L_f, double kappa) {
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  if (T < 1) throw std::invalid_argument("T must be >= 1");
  if (!(L_f > 0.0)) throw std::invalid_argument("L_f must be positive");
  if (!(kappa >= 1.0)) throw std::invalid_argument("kappa must be >= 1");

  const double nd = static_cast<double>(n);
  const double Td = static_cast<double>(T);
  TheoremSchedule out;
  auto& warnings = out.warnings;
  out.sync.horizon_T = T;

  switch (theorem) {
    case TheoremId::kT1: {
      if (T < n) throw std::invalid_argument("T1 schedule requires T >= n");
      if (Td < nd * nd * nd) {
        warnings.push_back("T < n^3: outside the asymptotic regime");
      }
      out.sync.tau =
          tau_from_power(std::pow(Td, 0.25) / std::pow(nd, 0.75), T, warnings);
      out.step.eta_y = std::sqrt(nd / (L_f * Td));
      out.step.eta_x = out.step.eta_y / (8.0 * kappa * kappa);
      if (out.step.eta_y > 1.0 / (8.0 * L_f * out.sync.tau)) {
        throw std::invalid_argument(
            "T1 schedule: eta_y <= 1/(8 L_f tau) cannot hold for these "
            "(n, T, L_f)");
      }
      break;
    }
    case TheoremId::kT2: {
      if (T < n) throw std::invalid_argument("T2 schedule requires T >= n");
      if (Td < nd * nd * nd) {
        warnings.push_back("T < n^3: outside the asymptotic regime");
      }
      out.sync.tau =
          tau_from_power(std::pow(Td, 0.25) / std::pow(nd, 0.75), T, warnings);
      out.step.alpha = std::sqrt(nd / Td);
      out.step.beta_x = 3.0;
      out.step.beta_y = 3.0;
      // alpha * eta_y == sqrt(n / (L T)), the T1 step.
      out.step.eta_y = 1.0 / std::sqrt(L_f);
      out.step.eta_x = out.step.eta_y / (8.0 * kappa * kappa);
      break;
    }
    case TheoremId::kT3: {
      if (Td < std::pow(nd, 7.0)) {
        warnings.push_back("T < n^7: outside the asymptotic regime");
      }
      out.sync.tau = tau_from_power(
          std::pow(Td, 0.125) / std::pow(nd, 0.875), T, warnings);
      const double cap = 1.0 / (8.0 * L_f * out.sync.tau);
      out.step.eta_x = std::min(std::pow(nd, 0.25) / std::pow(Td, 0.75), cap);
      out.step.eta_y = std::min(std::pow(nd, 0.75) / std::pow(Td, 0.25), cap);
      const int s_raw =
          std::max(1, static_cast<int>(std::ceil(std::sqrt(Td / nd))));
      const int tau = out.sync.tau;
      out.sync.s_interval = ((s_raw + tau - 1) / tau) * tau;
      break;
    }
  }
  return out;
}

const char* to_string(TheoremId id) {
  switch (id) {
    case TheoremId::kT1: return "T1";
    case TheoremId::kT2: return "T2";
    case TheoremId::kT3: return "T3";
  }
  return "?";
}

TheoremId theorem_from_string(const std::string& s) {
  if (s == "T1") return TheoremId::kT1;
  if (s == "T2") return TheoremId::kT2;
  if (s == "T3") return TheoremId::kT3;
  throw std::invalid_argument("unknown theorem id: " + s);
}

}  // namespace fedminimax
