#include "fedminimax/envelope.hpp"

#include <cmath>
#include <stdexcept>

namespace fedminimax {

namespace {

double rel_tol(const Vec& eig) {
  const double scale = eig.size() ? std::max(1.0, eig.cwiseAbs().maxCoeff()) : 1.0;
  return 1e-10 * scale;
}

}  // namespace

BallQuadraticMax::BallQuadraticMax(const Mat& P, double radius)
    : radius_(radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("ball radius must be > 0");
  Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (P + P.transpose()));
  basis_ = es.eigenvectors();
  eig_ = es.eigenvalues().cwiseMax(0.0);
  eig_tol_ = rel_tol(eig_);
}

Vec BallQuadraticMax::argmax(const Vec& b) const {
  const Vec bt = basis_.transpose() * b;
  const double bnorm = bt.norm();
  if (bnorm == 0.0) return Vec::Zero(b.size());

  // Interior candidate: exists iff b has no component in ker(P).
  bool interior_possible = true;
  Vec yt(bt.size());
  for (Eigen::Index j = 0; j < bt.size(); ++j) {
    if (eig_[j] > eig_tol_) {
      yt[j] = bt[j] / eig_[j];
    } else {
      yt[j] = 0.0;
      if (std::abs(bt[j]) > 1e-12 * bnorm) interior_possible = false;
    }
  }
  if (interior_possible && yt.norm() <= radius_) return basis_ * yt;

  // Boundary: find nu > 0 with ||y(nu)|| = R, y(nu)_j = bt_j / (eig_j + nu).
  auto norm_at = [&](double nu) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < bt.size(); ++j) {
      const double v = bt[j] / (eig_[j] + nu);
      s += v * v;
    }
    return std::sqrt(s);
  };
  double lo = 0.0;
  double hi = bnorm / radius_;  // ||y(hi)|| <= R
  double nu = 0.5 * hi;
  for (int it = 0; it < 200; ++it) {
    const double phi = norm_at(nu);
    if (phi > radius_) lo = nu; else hi = nu;
    // Newton step on 1/||y(nu)|| - 1/R, safeguarded by the bracket.
    double dphi = 0.0;
    for (Eigen::Index j = 0; j < bt.size(); ++j) {
      const double den = eig_[j] + nu;
      dphi -= bt[j] * bt[j] / (den * den * den);
    }
    dphi /= phi;
    double next = nu + (1.0 / phi - 1.0 / radius_) * phi * phi / dphi;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const bool done = std::abs(next - nu) <= 1e-15 * nu;
    nu = next;
    if (done) break;
  }
  for (Eigen::Index j = 0; j < bt.size(); ++j) yt[j] = bt[j] / (eig_[j] + nu);
  yt *= radius_ / yt.norm();
  return basis_ * yt;
}

EnvelopeModel::EnvelopeModel(const ProblemInstance& p) : problem_(&p) {
  const auto& m = p.mean_client();
  const auto kind = p.y_constraint().kind;
  if (kind == YConstraint::Kind::kSimplex) {
    throw std::domain_error("envelope: simplex-constrained y is not supported");
  }
  if (kind == YConstraint::Kind::kBall) {
    if (p.reparam_amplitude() != 0.0) {
      throw std::domain_error(
          "envelope: reparameterized y with a ball constraint is not supported");
    }
    kind_ = Kind::kBall;
    inner_ball_ = BallQuadraticMax(m.M, p.y_constraint().radius);
    const double qmin =
        Eigen::SelfAdjointEigenSolver<Mat>(m.Q, Eigen::EigenvaluesOnly)
            .eigenvalues()
            .minCoeff();
    weak_convexity_ = std::max(0.0, -qmin);
    return;
  }

  kind_ = Kind::kUnconstrained;
  Eigen::SelfAdjointEigenSolver<Mat> es(m.M);
  const Vec ev = es.eigenvalues();
  const double tol = rel_tol(ev);
  Vec inv = Vec::Zero(ev.size());
  Vec in_range = Vec::Zero(ev.size());
  for (Eigen::Index j = 0; j < ev.size(); ++j) {
    if (ev[j] > tol) {
      inv[j] = 1.0 / ev[j];
      in_range[j] = 1.0;
    } else if (ev[j] < -tol) {
      throw std::domain_error("envelope: M is not positive semidefinite");
    }
  }
  const Mat& V = es.eigenvectors();
  m_pinv_ = V * inv.asDiagonal() * V.transpose();
  range_proj_ = V * in_range.asDiagonal() * V.transpose();

  // The inner max is attained only if B'x + d stays in range(M) for all x.
  const Mat kernel_proj = Mat::Identity(p.d2(), p.d2()) - range_proj_;
  const double leak = (kernel_proj * m.B.transpose()).norm() +
                      (kernel_proj * m.d).norm();
  const double scale = 1.0 + m.B.norm() + m.d.norm();
  if (leak > 1e-8 * scale) {
    throw std::domain_error(
        "envelope: max_y f(x, y) is unbounded (B'x + d leaves range(M))");
  }

  phi_hessian_ = m.Q + m.B * m_pinv_ * m.B.transpose();
  phi_hessian_ = 0.5 * (phi_hessian_ + phi_hessian_.transpose()).eval();
  phi_offset_ = m.c + m.B * (m_pinv_ * m.d);
  phi_const_ = 0.5 * m.d.dot(m_pinv_ * m.d);
  const double hmin =
      Eigen::SelfAdjointEigenSolver<Mat>(phi_hessian_, Eigen::EigenvaluesOnly)
          .eigenvalues()
          .minCoeff();
  weak_convexity_ = std::max(0.0, -hmin);
}

double EnvelopeModel::phi(const Vec& x) const {
  const auto& m = problem_->mean_client();
  if (kind_ == Kind::kUnconstrained) {
    return 0.5 * x.dot(phi_hessian_ * x) + phi_offset_.dot(x) + phi_const_;
  }
  const Vec y = inner_ball_.argmax(m.B.transpose() * x + m.d);
  return problem_->mean_value(x, y);
}

Vec EnvelopeModel::y_star(const Vec& x) const {
  const auto& m = problem_->mean_client();
  const Vec v = m.B.transpose() * x + m.d;
  if (kind_ == Kind::kBall) return inner_ball_.argmax(v);
  const Vec u = m_pinv_ * v;
  return problem_->reparam_inverse(u);
}

Vec EnvelopeModel::nearest_y_star(const Vec& x, const Vec& y) const {
  const Vec ys = y_star(x);
  if (kind_ == Kind::kBall || problem_->reparam_amplitude() != 0.0) return ys;
  // Solution set is ys + ker(M).
  return ys + (y - ys) - range_proj_ * (y - ys);
}

Vec EnvelopeModel::grad_phi(const Vec& x) const {
  if (kind_ != Kind::kUnconstrained) {
    throw std::domain_error("grad_phi: Phi is nonsmooth for constrained y");
  }
  return phi_hessian_ * x + phi_offset_;
}

std::optional<Vec> EnvelopeModel::phi_minimizer() const {
  if (kind_ != Kind::kUnconstrained) return std::nullopt;
  Eigen::LLT<Mat> llt(phi_hessian_);
  if (llt.info() != Eigen::Success) return std::nullopt;
  return Vec(llt.solve(-phi_offset_));
}

ProxSolver::ProxSolver(const EnvelopeModel& env, double inv_lambda)
    : env_(&env), inv_lambda_(inv_lambda) {
  if (!(inv_lambda > 0.0) || !std::isfinite(inv_lambda)) {
    throw std::invalid_argument("prox: lambda must be positive and finite");
  }
  if (inv_lambda <= env.weak_convexity()) {
    throw std::domain_error(
        "prox objective is not strongly convex: lambda >= 1/rho");
  }
  const auto& m = env.problem().mean_client();
  const int d1 = env.problem().d1();
  const Mat shift = inv_lambda * Mat::Identity(d1, d1);
  if (env.kind() == EnvelopeModel::Kind::kUnconstrained) {
    chol_.compute(env.phi_hessian() + shift);
  } else {
    chol_.compute(m.Q + shift);
  }
  if (chol_.info() != Eigen::Success) {
    throw std::domain_error("prox objective is not strongly convex");
  }
  if (env.kind() == EnvelopeModel::Kind::kBall) {
    hinv_b_ = chol_.solve(m.B);
    Mat P = m.M + m.B.transpose() * hinv_b_;
    dual_ = BallQuadraticMax(P, env.problem().y_constraint().radius);
  }
}

Vec ProxSolver::prox(const Vec& x) const {
  if (env_->kind() == EnvelopeModel::Kind::kUnconstrained) {
    return chol_.solve(inv_lambda_ * x - env_->phi_offset());
  }
  const auto& m = env_->problem().mean_client();
  const Vec a = inv_lambda_ * x - m.c;
  const Vec b = m.d + hinv_b_.transpose() * a;
  const Vec y = dual_.argmax(b);
  return chol_.solve(a - m.B * y);
}

double ProxSolver::envelope_value(const Vec& x) const {
  const Vec xh = prox(x);
  return env_->phi(xh) + 0.5 * inv_lambda_ * (xh - x).squaredNorm();
}

}  // namespace fedminimax
