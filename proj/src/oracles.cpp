#include "fedminimax/oracles.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "fedminimax/metrics.hpp"
#include "fedminimax/rng.hpp"

namespace fedminimax {

namespace {

Vec central_diff(const ScalarField& fn, const Vec& x, double h) {
  Vec g(x.size());
  Vec xp = x;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    xp[k] = x[k] + h;
    const double fp = fn(xp);
    xp[k] = x[k] - h;
    const double fm = fn(xp);
    xp[k] = x[k];
    g[k] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace

Vec finite_diff_grad(const ScalarField& fn, const Vec& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be > 0");
  const Vec coarse = central_diff(fn, x, h);
  const Vec fine = central_diff(fn, x, h / 2.0);
  const double scale = std::max(fine.norm(), 1e-12);
  if ((coarse - fine).norm() / scale <= 1e-4) return coarse;
  return (4.0 * fine - coarse) / 3.0;
}

namespace {

// Exact line search along the gradient of a concave quadratic in y.
bool ascend_quadratic(const ProblemInstance& p, const Vec& x, Vec& y,
                      double tol, std::int64_t max_iters, std::int64_t& iters) {
  const Mat& M = p.mean_client().M;
  for (std::int64_t k = 0; k < max_iters; ++k, ++iters) {
    const Vec g = p.mean_grad(x, y).gy;
    const double gn2 = g.squaredNorm();
    if (std::sqrt(gn2) <= tol) return true;
    const double curv = g.dot(M * g);
    if (!(curv > 1e-14 * gn2)) {
      throw std::runtime_error("inner maximization is unbounded above");
    }
    y += (gn2 / curv) * g;
  }
  return false;
}

// Backtracking (projected) gradient ascent; convergence is measured by the
// gradient mapping at unit step.
bool ascend_backtracking(const ProblemInstance& p, const Vec& x, Vec& y,
                         double tol, std::int64_t max_iters,
                         std::int64_t& iters) {
  const bool proj = p.constrained();
  auto P = [&](const Vec& v) { return proj ? project_y(p, v) : v; };
  double step = 1.0;
  double fy = p.mean_value(x, y);
  for (std::int64_t k = 0; k < max_iters; ++k, ++iters) {
    const Vec g = p.mean_grad(x, y).gy;
    if ((P(y + g) - y).norm() <= tol) return true;
    step = std::min(step * 2.0, 1e8);
    for (;;) {
      const Vec cand = P(y + step * g);
      const Vec diff = cand - y;
      const double fc = p.mean_value(x, cand);
      if (fc >= fy + diff.squaredNorm() / (2.0 * step) ||
          diff.norm() <= 1e-15 * (1.0 + y.norm())) {
        if (!std::isfinite(fc)) {
          throw std::runtime_error("inner maximization is unbounded above");
        }
        y = cand;
        fy = fc;
        break;
      }
      step *= 0.5;
      if (step < 1e-20) return false;
    }
  }
  return false;
}

}  // namespace

InnerMaxResult brute_force_inner_max(const ProblemInstance& p, const Vec& x,
                                     int starts, double tol,
                                     std::uint64_t seed,
                                     std::int64_t max_iters) {
  if (starts < 1) throw std::invalid_argument("starts must be >= 1");
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be > 0");
  const bool quadratic = !p.constrained() && p.reparam_amplitude() == 0.0;
  RngStream rng(seed, {0, StreamPurpose::kSampling});

  InnerMaxResult best;
  best.value = -std::numeric_limits<double>::infinity();
  for (int s = 0; s < starts; ++s) {
    Vec y = s == 0 ? Vec::Zero(p.d2()) : draw_gaussian(rng, p.d2(), std::sqrt(p.d2()));
    if (p.constrained()) y = project_y(p, y);
    std::int64_t iters = 0;
    const bool ok = quadratic ? ascend_quadratic(p, x, y, tol, max_iters, iters)
                              : ascend_backtracking(p, x, y, tol, max_iters, iters);
    best.iterations += iters;
    if (!ok) continue;
    ++best.converged_starts;
    const double v = p.mean_value(x, y);
    if (v > best.value) {
      best.value = v;
      best.y = y;
    }
  }
  if (best.converged_starts == 0) {
    throw std::runtime_error("brute_force_inner_max: no start converged");
  }
  return best;
}

RateFit fit_rate(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("fit_rate: size mismatch");
  if (xs.size() < 3) throw std::invalid_argument("fit_rate: need at least 3 points");
  RateFit fit;
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    if (!(xs[k] > 0.0) || !(ys[k] > 0.0)) {
      throw std::invalid_argument("fit_rate: values must be positive");
    }
    fit.points.emplace_back(std::log(xs[k]), std::log(ys[k]));
    mx += fit.points.back().first;
    my += fit.points.back().second;
  }
  const double m = static_cast<double>(xs.size());
  mx /= m;
  my /= m;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [lx, ly] : fit.points) {
    sxx += (lx - mx) * (lx - mx);
    sxy += (lx - mx) * (ly - my);
    syy += (ly - my) * (ly - my);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("fit_rate: degenerate xs");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy > 0.0 ? std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0) : 1.0;
  return fit;
}

ProxReference prox_reference(const ProblemInstance& p, const Vec& x,
                             double lambda, double tol,
                             std::int64_t max_iters) {
  if (p.reparam_amplitude() != 0.0) {
    throw std::domain_error("prox_reference: reparameterized instance");
  }
  if (!(lambda > 0.0)) throw std::invalid_argument("lambda must be > 0");
  const QuadraticClient& q = p.mean_client();
  const int d1 = p.d1();
  const Mat H = q.Q + Mat::Identity(d1, d1) / lambda;
  Eigen::LLT<Mat> chol(H);
  if (chol.info() != Eigen::Success) {
    throw std::domain_error("prox_reference: f(., y) + |.|^2/(2 lambda) not strongly convex");
  }
  const Vec a = x / lambda - q.c;
  const Mat HinvB = chol.solve(q.B);
  const Mat P = q.M + q.B.transpose() * HinvB;
  const double L = std::max(
      Eigen::SelfAdjointEigenSolver<Mat>(P, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff(),
      1e-12);

  auto z_of = [&](const Vec& y) -> Vec { return chol.solve(a - q.B * y); };
  auto dual_grad = [&](const Vec& y) -> Vec {
    return q.B.transpose() * z_of(y) + q.d - q.M * y;
  };

  ProxReference out;
  Vec y = Vec::Zero(p.d2());
  if (p.constrained()) y = project_y(p, y);
  for (; out.iterations < max_iters; ++out.iterations) {
    Vec next = y + dual_grad(y) / L;
    if (p.constrained()) next = project_y(p, next);
    const double move = (next - y).norm();
    y = std::move(next);
    if (move <= tol * (1.0 + y.norm())) break;
  }
  if (out.iterations >= max_iters) {
    throw std::runtime_error("prox_reference: dual ascent did not converge");
  }
  out.y = y;
  out.x_hat = z_of(y);
  out.envelope_value = p.mean_value(out.x_hat, y) +
                       (out.x_hat - x).squaredNorm() / (2.0 * lambda);
  return out;
}

Trace centralized_sgda_reference(const ProblemInstance& p,
                                 const AlgorithmConfig& cfg) {
  cfg.sync.validate();
  cfg.step.validate(false);
  if (cfg.metric_stride < 1) throw std::invalid_argument("metric_stride must be >= 1");
  const int n = p.n();
  const std::int64_t T = cfg.sync.horizon_T;
  Vec x = cfg.x0.size() ? cfg.x0 : Vec::Zero(p.d1());
  Vec y = cfg.y0.size() ? cfg.y0 : Vec::Zero(p.d2());
  if (x.size() != p.d1() || y.size() != p.d2()) {
    throw std::invalid_argument("initial point dimension does not match the problem");
  }
  const bool proj = p.constrained();
  if (proj) y = project_y(p, y);

  std::vector<NoiseStreams> streams;
  for (int i = 0; i < n; ++i) {
    streams.emplace_back(cfg.seed, static_cast<std::uint32_t>(i), cfg.noise);
  }
  Trace tr;
  tr.algorithm = AlgorithmId::kCentralizedSgda;
  tr.seed = cfg.seed;
  tr.T = T;
  tr.tau = 1;
  tr.step = cfg.step;
  tr.noise = cfg.noise;
  tr.projected = proj;
  RngStream out_rng(cfg.seed, {static_cast<std::uint32_t>(n), StreamPurpose::kOutputIndex});
  tr.output_index = 1 + static_cast<std::int64_t>(
                            out_rng.next_below(static_cast<std::uint64_t>(T)));

  MetricEvaluator eval(p);
  std::vector<Vec> xs(n), ys(n);
  for (std::int64_t t = 0; t < T; ++t) {
    if (t % cfg.metric_stride == 0) {
      if (!all_finite(x) || !all_finite(y)) {
        throw std::runtime_error("iterates diverged at t = " + std::to_string(t));
      }
      MetricRecord rec;
      rec.step = static_cast<std::int64_t>(tr.records.size());
      rec.t = t;
      rec.comm_rounds = t;
      eval.evaluate(x, y, rec);
      tr.records.push_back(rec);
      if (cfg.capture_trajectory) {
        tr.traj_x.push_back(x);
        tr.traj_y.push_back(y);
      }
    }
    if (t == tr.output_index) tr.x_output = x;
    for (int i = 0; i < n; ++i) {
      const Vec gx = stochastic_grad_x(p, i, x, y, streams[i]);
      const Vec gy = stochastic_grad_y(p, i, x, y, streams[i]);
      xs[i] = x - cfg.step.eta_x * gx;
      ys[i] = y + cfg.step.eta_y * gy;
      if (proj) ys[i] = project_y(p, ys[i]);
    }
    x = client_mean(xs);
    y = client_mean(ys);
  }
  tr.x_final = x;
  tr.y_final = y;
  if (tr.output_index == T) tr.x_output = x;
  tr.comm_rounds = T;
  if (!all_finite(x) || !all_finite(y)) {
    throw std::runtime_error("iterates diverged (non-finite final average)");
  }
  return tr;
}

}  // namespace fedminimax
