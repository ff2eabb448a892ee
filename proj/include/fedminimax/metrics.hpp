#pragma once

#include <cstdint>
#include <optional>
#include <span>

#include "fedminimax/envelope.hpp"
#include "fedminimax/problems.hpp"
#include "fedminimax/types.hpp"

namespace fedminimax {

/// One row of a trace, evaluated at the virtual averages (x_t, y_t).
struct MetricRecord {
  std::int64_t step = 0;  // row index
  std::int64_t t = 0;     // iteration
  std::optional<double> grad_phi_sq;
  std::optional<double> moreau_grad_sq;
  std::optional<double> phi_gap;
  double sync_err_x = 0.0;
  double sync_err_y = 0.0;
  std::optional<double> dist_to_saddle;
  std::optional<double> dir_err_x;  // ||grad_x f(x_t, y_t) - d_x,t|| (momentum)
  std::optional<double> dir_err_y;
  std::int64_t comm_rounds = 0;  // syncs completed before t
};

struct SyncError {
  double delta_x = 0.0;
  double delta_y = 0.0;
};

/// (1/n) sum ||x_i - mean x||^2 and the same for y.
SyncError sync_error(std::span<const Vec> xs, std::span<const Vec> ys);

/// ||grad Phi(x)||^2 from the closed-form envelope.
double stationarity_phi(const ProblemInstance& p, const Vec& x);

/// Gradient of the lambda-Moreau envelope of Phi, (x - prox(x)) / lambda.
Vec moreau_grad(const ProblemInstance& p, const Vec& x, double lambda);
/// Same with lambda = 1 / (2 L_f), L_f the exact smoothness constant; the
/// result is 2 L_f (x - prox(x)).
Vec moreau_grad(const ProblemInstance& p, const Vec& x);

/// Phi(x) - f(x, y), clipped to 0 after a -1e-10 tolerance.
double phi_gap(const ProblemInstance& p, const Vec& x, const Vec& y);

/// Per-trace metric evaluation with factorizations computed once.
class MetricEvaluator {
 public:
  explicit MetricEvaluator(const ProblemInstance& p);

  bool has_envelope() const { return env_.has_value(); }
  double L_f() const { return L_f_; }

  std::optional<double> grad_phi_sq(const Vec& x) const;
  std::optional<double> moreau_grad_sq(const Vec& x) const;
  std::optional<double> phi_gap(const Vec& x, const Vec& y) const;
  std::optional<double> dist_to_saddle(const Vec& x, const Vec& y) const;

  /// Fills the envelope-derived fields of a record.
  void evaluate(const Vec& x, const Vec& y, MetricRecord& rec) const;

 private:
  const ProblemInstance* problem_;
  double L_f_;
  std::optional<EnvelopeModel> env_;
  std::optional<ProxSolver> prox_;
  std::optional<Vec> saddle_x_;
  std::optional<Vec> saddle_y_;
};

}  // namespace fedminimax
