#pragma once

#include <optional>

#include "fedminimax/problems.hpp"
#include "fedminimax/types.hpp"

namespace fedminimax {

/// argmax_{||y|| <= R} -1/2 y'P y + b'y for a fixed PSD P. Solved exactly in
/// P's eigenbasis; the boundary case reduces to a scalar secular equation.
class BallQuadraticMax {
 public:
  BallQuadraticMax() = default;
  BallQuadraticMax(const Mat& P, double radius);

  Vec argmax(const Vec& b) const;
  double radius() const { return radius_; }

 private:
  Mat basis_;
  Vec eig_;
  double radius_ = 1.0;
  double eig_tol_ = 0.0;
};

/// Closed-form envelope Phi(x) = max_y f(x, y) of a problem instance.
/// Supported: unconstrained quadratic inner problems with attained maximum
/// (NC-SC, NC-PL, NC-1PC, minimization) and ball-constrained y without
/// reparameterization (NC-C). Constructing on anything else throws
/// std::domain_error.
class EnvelopeModel {
 public:
  enum class Kind { kUnconstrained, kBall };

  explicit EnvelopeModel(const ProblemInstance& p);

  Kind kind() const { return kind_; }
  const ProblemInstance& problem() const { return *problem_; }

  double phi(const Vec& x) const;
  /// Min-norm maximizer (unconstrained) or the unique ball maximizer.
  Vec y_star(const Vec& x) const;
  /// Maximizer closest to y; differs from y_star only for singular M (NC-PL).
  Vec nearest_y_star(const Vec& x, const Vec& y) const;
  /// Gradient of Phi. Unconstrained kinds only; throws std::domain_error for
  /// the ball kind, where Phi need not be differentiable.
  Vec grad_phi(const Vec& x) const;

  /// Hessian of Phi (constant) and the affine offset: grad Phi = H x + g.
  const Mat& phi_hessian() const { return phi_hessian_; }
  const Vec& phi_offset() const { return phi_offset_; }
  /// Unique minimizer of Phi when its Hessian is positive definite.
  std::optional<Vec> phi_minimizer() const;
  /// rho such that Phi + rho/2 ||.||^2 is convex.
  double weak_convexity() const { return weak_convexity_; }

 private:
  const ProblemInstance* problem_;
  Kind kind_ = Kind::kUnconstrained;
  Mat m_pinv_;
  Mat range_proj_;
  Mat phi_hessian_;
  Vec phi_offset_;
  double phi_const_ = 0.0;
  double weak_convexity_ = 0.0;
  BallQuadraticMax inner_ball_;
};

/// Proximal map of Phi with fixed 1/lambda:
///   prox(x) = argmin_x' Phi(x') + (inv_lambda / 2) ||x' - x||^2.
/// Quadratic Phi: one linear solve. Ball kind: exact dual solve (the prox
/// objective is convex in x', linear-quadratic concave in y on a compact
/// set). Throws std::domain_error if the prox objective is not strongly
/// convex.
class ProxSolver {
 public:
  ProxSolver(const EnvelopeModel& env, double inv_lambda);

  Vec prox(const Vec& x) const;
  /// Moreau envelope value Phi_lambda(x).
  double envelope_value(const Vec& x) const;
  double inv_lambda() const { return inv_lambda_; }

 private:
  const EnvelopeModel* env_;
  double inv_lambda_;
  Eigen::LLT<Mat> chol_;  // (Phi Hessian or Q) + inv_lambda I
  Mat hinv_b_;            // H^{-1} B (ball kind)
  BallQuadraticMax dual_;
};

}  // namespace fedminimax
