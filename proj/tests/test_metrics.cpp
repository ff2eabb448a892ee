#include <doctest.h>

#include <vector>

#include "fedminimax/metrics.hpp"
#include "fedminimax/oracles.hpp"

using namespace fedminimax;

namespace {

Mat m1(double v) { return Mat::Constant(1, 1, v); }
Vec v1(double v) { return Vec::Constant(1, v); }

ProblemInstance scalar_ncsc() {
  QuadraticClient q{m1(-1.0), m1(1.0), m1(2.0), v1(0.0), v1(0.0)};
  return ProblemInstance({q}, ProblemClass::kNcSc, 0.0, {}, 0.0, 0);
}

// Phi(x) = 1/2 x^2
ProblemInstance half_square() {
  QuadraticClient q{m1(1.0), m1(0.0), m1(1.0), v1(0.0), v1(0.0)};
  return ProblemInstance({q}, ProblemClass::kMinimization, 0.0, {}, 0.0, 0);
}

ProblemInstance ncc(std::uint64_t seed) {
  GeneratorParams g;
  g.class_tag = ProblemClass::kNcC;
  g.n = 2;
  g.d1 = 4;
  g.d2 = 3;
  g.seed = seed;
  return make_quadratic(g);
}

}  // namespace

TEST_CASE("sync error") {
  const std::vector<Vec> same{v1(1.5), v1(1.5), v1(1.5)};
  const SyncError z = sync_error(same, same);
  CHECK(z.delta_x == 0.0);
  CHECK(z.delta_y == 0.0);

  const std::vector<Vec> xs{v1(0.0), v1(2.0)};
  const std::vector<Vec> ys{v1(1.0), v1(1.0)};
  const SyncError e = sync_error(xs, ys);
  CHECK(e.delta_x == 1.0);
  CHECK(e.delta_y == 0.0);
}

TEST_CASE("stationarity of the scalar envelope") {
  const auto p = scalar_ncsc();
  CHECK(stationarity_phi(p, v1(1.0)) == doctest::Approx(0.25));
  CHECK(stationarity_phi(p, v1(0.0)) == 0.0);
}

TEST_CASE("stationarity vanishes at the minimizer of phi") {
  GeneratorParams g;
  g.n = 3;
  g.d1 = 5;
  g.d2 = 4;
  g.seed = 12;
  g.het.varsigma_x = 0.3;
  const auto p = make_quadratic(g);
  EnvelopeModel env(p);
  const auto xs = env.phi_minimizer();
  REQUIRE(xs.has_value());
  CHECK(stationarity_phi(p, *xs) <= 1e-12);
  CHECK(moreau_grad(p, *xs).norm() <= 1e-9);
}

TEST_CASE("phi gap") {
  const auto p = scalar_ncsc();
  CHECK(phi_gap(p, v1(0.0), v1(1.0)) == doctest::Approx(1.0));
  CHECK(phi_gap(p, v1(2.0), v1(1.0)) == 0.0);  // y*(2) = 1
  const auto q = ncc(3);
  const Vec x = Vec::LinSpaced(q.d1(), -1.0, 1.0);
  EnvelopeModel env(q);
  CHECK(phi_gap(q, x, env.y_star(x)) <= 1e-12);
}

TEST_CASE("moreau gradient of a convex quadratic") {
  const auto p = half_square();
  CHECK(moreau_grad(p, v1(2.0), 1.0)[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(moreau_grad(p, v1(0.0), 1.0)[0] == 0.0);
  // lambda = 1/(2 L_f) = 1/2: prox = 2x/3, gradient 2x/3.
  CHECK(moreau_grad(p, v1(2.0))[0] == doctest::Approx(4.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("moreau gradient matches finite differences of the envelope") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto p = ncc(seed);
    EnvelopeModel env(p);
    const double lambda = 1.0 / (2.0 * lipschitz_constant(p));
    ProxSolver prox(env, 1.0 / lambda);
    RngStream rng(seed, {0, StreamPurpose::kSampling});
    const Vec x = draw_gaussian(rng, p.d1(), 3.0);
    const Vec g = moreau_grad(p, x, lambda);
    const Vec fd = finite_diff_grad([&](const Vec& z) { return prox.envelope_value(z); }, x);
    CHECK((fd - g).norm() <= 1e-5 * std::max(1.0, g.norm()));
    CHECK(g == (x - prox.prox(x)) / lambda);
  }
}

TEST_CASE("moreau gradient of smooth phi is close to grad phi") {
  GeneratorParams g;
  g.n = 1;
  g.d1 = 3;
  g.d2 = 3;
  g.seed = 4;
  const auto p = make_quadratic(g);
  const Vec x = Vec::Constant(3, 0.7);
  EnvelopeModel env(p);
  // grad Phi_lambda(x) = grad Phi(prox(x)).
  const double lambda = 1.0 / (2.0 * lipschitz_constant(p));
  ProxSolver prox(env, 1.0 / lambda);
  CHECK((moreau_grad(p, x) - env.grad_phi(prox.prox(x))).norm() <= 1e-10);
}

TEST_CASE("PL inequality holds for NC-PL instances") {
  GeneratorParams g;
  g.class_tag = ProblemClass::kNcPl;
  g.n = 2;
  g.d1 = 3;
  g.d2 = 4;
  g.mu = 0.3;
  g.seed = 8;
  const auto p = make_quadratic(g);
  EnvelopeModel env(p);
  RngStream rng(1, {0, StreamPurpose::kSampling});
  for (int k = 0; k < 200; ++k) {
    const Vec x = draw_gaussian(rng, p.d1(), 2.0);
    const Vec y = draw_gaussian(rng, p.d2(), 2.0);
    const double gap = phi_gap(p, x, y);
    CHECK(p.mean_grad(x, y).gy.squaredNorm() >= 2.0 * 0.3 * gap - 1e-8);
  }
}

TEST_CASE("metric evaluator") {
  const auto p = scalar_ncsc();
  MetricEvaluator ev(p);
  CHECK(ev.has_envelope());
  CHECK(*ev.grad_phi_sq(v1(1.0)) == doctest::Approx(0.25));
  MetricRecord rec;
  ev.evaluate(v1(0.0), v1(1.0), rec);
  CHECK(*rec.phi_gap == doctest::Approx(1.0));
  // Phi = -x^2/4 has no minimizer, so there is no saddle to measure against.
  CHECK_FALSE(rec.dist_to_saddle.has_value());

  const auto q = ncc(5);
  MetricEvaluator evc(q);
  CHECK_FALSE(evc.grad_phi_sq(Vec::Zero(q.d1())).has_value());
  CHECK(evc.moreau_grad_sq(Vec::Zero(q.d1())).has_value());
}
