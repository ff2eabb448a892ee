#include "fedminimax/metrics.hpp"

#include <cmath>
#include <stdexcept>

namespace fedminimax {

SyncError sync_error(std::span<const Vec> xs, std::span<const Vec> ys) {
  if (xs.empty() || xs.size() != ys.size()) {
    throw std::invalid_argument("sync_error: need n >= 1 matching x and y");
  }
  const double n = static_cast<double>(xs.size());
  Vec mx = Vec::Zero(xs[0].size());
  Vec my = Vec::Zero(ys[0].size());
  for (const auto& v : xs) mx += v - xs[0];
  for (const auto& v : ys) my += v - ys[0];
  mx = xs[0] + mx / n;
  my = ys[0] + my / n;
  SyncError e;
  for (const auto& v : xs) e.delta_x += (v - mx).squaredNorm();
  for (const auto& v : ys) e.delta_y += (v - my).squaredNorm();
  e.delta_x /= n;
  e.delta_y /= n;
  return e;
}

double stationarity_phi(const ProblemInstance& p, const Vec& x) {
  EnvelopeModel env(p);
  return env.grad_phi(x).squaredNorm();
}

Vec moreau_grad(const ProblemInstance& p, const Vec& x, double lambda) {
  if (!(lambda > 0.0)) throw std::invalid_argument("moreau_grad: lambda must be > 0");
  EnvelopeModel env(p);
  const double inv_lambda = 1.0 / lambda;
  ProxSolver prox(env, inv_lambda);
  return (x - prox.prox(x)) * inv_lambda;
}

Vec moreau_grad(const ProblemInstance& p, const Vec& x) {
  EnvelopeModel env(p);
  const double inv_lambda = 2.0 * lipschitz_constant(p);
  ProxSolver prox(env, inv_lambda);
  return (x - prox.prox(x)) * inv_lambda;
}

namespace {
constexpr double kGapTolerance = 1e-10;

double clip_gap(double gap, double phi) {
  if (gap < -kGapTolerance * (1.0 + std::abs(phi))) {
    throw std::runtime_error("phi_gap: negative gap beyond tolerance");
  }
  return gap < 0.0 ? 0.0 : gap;
}
}  // namespace

double phi_gap(const ProblemInstance& p, const Vec& x, const Vec& y) {
  EnvelopeModel env(p);
  const double phi = env.phi(x);
  return clip_gap(phi - p.mean_value(x, y), phi);
}

MetricEvaluator::MetricEvaluator(const ProblemInstance& p)
    : problem_(&p), L_f_(lipschitz_constant(p)) {
  try {
    env_.emplace(p);
  } catch (const std::domain_error&) {
    return;
  }
  if (L_f_ > 0.0) {
    try {
      prox_.emplace(*env_, 2.0 * L_f_);
    } catch (const std::domain_error&) {
    }
  }
  if (auto xs = env_->phi_minimizer()) {
    saddle_x_ = *xs;
    saddle_y_ = env_->y_star(*xs);
  }
}

std::optional<double> MetricEvaluator::grad_phi_sq(const Vec& x) const {
  if (!env_ || env_->kind() != EnvelopeModel::Kind::kUnconstrained) {
    return std::nullopt;
  }
  return env_->grad_phi(x).squaredNorm();
}

std::optional<double> MetricEvaluator::moreau_grad_sq(const Vec& x) const {
  if (!prox_) return std::nullopt;
  return ((x - prox_->prox(x)) * prox_->inv_lambda()).squaredNorm();
}

std::optional<double> MetricEvaluator::phi_gap(const Vec& x, const Vec& y) const {
  if (!env_) return std::nullopt;
  const double phi = env_->phi(x);
  return clip_gap(phi - problem_->mean_value(x, y), phi);
}

std::optional<double> MetricEvaluator::dist_to_saddle(const Vec& x,
                                                      const Vec& y) const {
  if (!saddle_x_) return std::nullopt;
  return std::sqrt((x - *saddle_x_).squaredNorm() +
                   (y - env_->nearest_y_star(*saddle_x_, y)).squaredNorm());
}

void MetricEvaluator::evaluate(const Vec& x, const Vec& y,
                               MetricRecord& rec) const {
  rec.grad_phi_sq = grad_phi_sq(x);
  rec.moreau_grad_sq = moreau_grad_sq(x);
  rec.phi_gap = phi_gap(x, y);
  rec.dist_to_saddle = dist_to_saddle(x, y);
}

}  // namespace fedminimax
