#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "fedminimax/algorithms.hpp"
#include "fedminimax/problems.hpp"

namespace fedminimax {

using ScalarField = std::function<double(const Vec&)>;

/// Central differences per coordinate. If the estimates at h and h/2 disagree
/// by more than 1e-4 (relative), the Richardson combination is returned.
Vec finite_diff_grad(const ScalarField& fn, const Vec& x, double h = 1e-5);

struct InnerMaxResult {
  Vec y;
  double value = 0.0;
  int converged_starts = 0;
  std::int64_t iterations = 0;
};

/// Multi-start ascent on y -> mean f(x, y). Quadratic objectives use exact
/// line search; reparameterized or constrained ones use (projected)
/// backtracking. Start 0 is y = 0 (projected), the rest are Gaussian.
/// Throws std::runtime_error when no start reaches `tol` within the cap or
/// the objective is unbounded above.
InnerMaxResult brute_force_inner_max(const ProblemInstance& p, const Vec& x,
                                     int starts, double tol,
                                     std::uint64_t seed = 0,
                                     std::int64_t max_iters = 200000);

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::vector<std::pair<double, double>> points;  // (log x, log y)
};

/// Ordinary least squares on (log xs, log ys).
RateFit fit_rate(const std::vector<double>& xs, const std::vector<double>& ys);

struct ProxReference {
  Vec x_hat;
  Vec y;
  double envelope_value = 0.0;  // Phi_lambda(x)
  std::int64_t iterations = 0;
};

/// Moreau envelope of Phi by projected gradient ascent on the dual
/// y -> min_z f(z, y) + ||z - x||^2 / (2 lambda). Independent of the
/// secular-equation solver used by ProxSolver. Requires lambda small enough
/// that f(., y) + ||.||^2 / (2 lambda) is strongly convex; reparameterized
/// instances are rejected with std::domain_error.
ProxReference prox_reference(const ProblemInstance& p, const Vec& x,
                             double lambda, double tol = 1e-14,
                             std::int64_t max_iters = 1000000);

/// Single-process SGDA whose step averages the n per-client stochastic steps
/// (a size-n minibatch), fed by the same per-client noise streams as the
/// local-update runners.
Trace centralized_sgda_reference(const ProblemInstance& p,
                                 const AlgorithmConfig& cfg);

}  // namespace fedminimax
