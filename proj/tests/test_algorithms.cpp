#include <doctest.h>

#include <cmath>
#include <vector>

#include "fedminimax/algorithms.hpp"
#include "fedminimax/oracles.hpp"

using namespace fedminimax;

namespace {

Mat m1(double v) { return Mat::Constant(1, 1, v); }
Vec v1(double v) { return Vec::Constant(1, v); }

ProblemInstance scalar(double q, double b, double m, ProblemClass cls = ProblemClass::kNcSc) {
  QuadraticClient c{m1(q), m1(b), m1(m), v1(0.0), v1(0.0)};
  return ProblemInstance({c}, cls, 0.0, {}, 0.0, 0);
}

// n copies of client 0 of `p`.
ProblemInstance replicate(const ProblemInstance& p, int n) {
  return ProblemInstance(std::vector<QuadraticClient>(n, p.clients()[0]), p.class_tag(),
                         p.sigma(), p.y_constraint(), p.reparam_amplitude(), p.seed());
}

ProblemInstance hetero(std::uint64_t seed, double sigma) {
  GeneratorParams g;
  g.n = 3;
  g.d1 = 4;
  g.d2 = 3;
  g.sigma = sigma;
  g.het.varsigma_x = 0.3;
  g.het.varsigma_y = 0.3;
  g.seed = seed;
  return make_quadratic(g);
}

AlgorithmConfig config(double ex, double ey, int tau, std::int64_t T) {
  AlgorithmConfig c;
  c.step.eta_x = ex;
  c.step.eta_y = ey;
  c.sync.tau = tau;
  c.sync.horizon_T = T;
  return c;
}

void check_same_trajectory(const Trace& a, const Trace& b) {
  REQUIRE(a.traj_x.size() == b.traj_x.size());
  for (std::size_t k = 0; k < a.traj_x.size(); ++k) {
    CHECK(a.traj_x[k] == b.traj_x[k]);
    CHECK(a.traj_y[k] == b.traj_y[k]);
  }
  CHECK(a.x_final == b.x_final);
  CHECK(a.y_final == b.y_final);
}

}  // namespace

TEST_CASE("name round trips") {
  for (auto id : {AlgorithmId::kLocalSgda, AlgorithmId::kMomentumLocalSgda,
                  AlgorithmId::kLocalSgdaPlus, AlgorithmId::kMomentumLocalSgdaPlus,
                  AlgorithmId::kLocalSgd, AlgorithmId::kCentralizedSgda}) {
    CHECK(algorithm_from_string(to_string(id)) == id);
  }
  CHECK(momentum_sync_from_string("keep") == MomentumSync::kKeep);
  CHECK(noise_mode_from_string("shared") == NoiseMode::kSharedSample);
  CHECK_THROWS_AS(algorithm_from_string("adam"), std::invalid_argument);
}

TEST_CASE("client mean of identical vectors is exact") {
  const Vec v = (Vec(3) << 0.1, 1.0 / 3.0, -7e-5).finished();
  const std::vector<Vec> vals(7, v);
  CHECK(client_mean(vals) == v);
}

TEST_CASE("sync is idempotent and zeroes the sync error") {
  const auto p = hetero(1, 0.0);
  std::vector<ClientState> cs(3);
  for (int i = 0; i < 3; ++i) {
    cs[i].x = Vec::Constant(4, i * 0.7);
    cs[i].y = Vec::Constant(3, -i * 0.2);
    cs[i].dx = Vec::Constant(4, i);
    cs[i].dy = Vec::Constant(3, 2.0 * i);
  }
  ServerState s;
  sync_models(cs, s, MomentumSync::kAverage);
  const auto once = cs;
  sync_models(cs, s, MomentumSync::kAverage);
  CHECK(s.round_count == 2);
  std::vector<Vec> xs, ys;
  for (int i = 0; i < 3; ++i) {
    CHECK(cs[i].x == once[i].x);
    CHECK(cs[i].dx == once[i].dx);
    CHECK(cs[i].dx == Vec::Constant(4, 1.0));
    xs.push_back(cs[i].x);
    ys.push_back(cs[i].y);
  }
  const SyncError e = sync_error(xs, ys);
  CHECK(e.delta_x == 0.0);
  CHECK(e.delta_y == 0.0);
  sync_models(cs, s, MomentumSync::kReset);
  CHECK(cs[2].dx.isZero(0.0));
}

TEST_CASE("GDA converges on a scalar problem with convex envelope") {
  // f = -1/2 x^2 + 2 x y - y^2: y*(x) = x, Phi(x) = x^2 / 2.
  const auto p = scalar(-1.0, 2.0, 2.0);
  auto cfg = config(0.01, 0.1, 1, 10000);
  cfg.x0 = v1(1.0);
  cfg.y0 = v1(-0.5);
  cfg.metric_stride = 10000;
  const Trace tr = run_local_sgda(p, cfg);
  CHECK(std::sqrt(stationarity_phi(p, tr.x_final)) <= 1e-6);
}

TEST_CASE("GDA moves away from the stationary point of a concave envelope") {
  // f = -1/2 x^2 + x y - y^2 has Phi = -x^2 / 4: x = 0 is a maximum of Phi and
  // two-timescale GDA with eta = (0.01, 0.1) is repelled from it.
  const auto p = scalar(-1.0, 1.0, 2.0);
  auto cfg = config(0.01, 0.1, 1, 10000);
  cfg.x0 = v1(1e-3);
  cfg.metric_stride = 10000;
  const Trace tr = run_local_sgda(p, cfg);
  CHECK(std::abs(tr.x_final[0]) > 1.0);
}

TEST_CASE("identical clients reproduce the single-client run") {
  GeneratorParams g;
  g.d1 = 4;
  g.d2 = 3;
  g.seed = 6;
  const auto one = make_quadratic(g);
  const auto many = replicate(one, 4);
  for (auto id : {AlgorithmId::kLocalSgda, AlgorithmId::kMomentumLocalSgda,
                  AlgorithmId::kLocalSgdaPlus, AlgorithmId::kMomentumLocalSgdaPlus,
                  AlgorithmId::kLocalSgd}) {
    CAPTURE(to_string(id));
    for (int tau : {1, 3}) {
      auto cfg = config(0.02, 0.05, tau, 24);
      if (id == AlgorithmId::kMomentumLocalSgda || id == AlgorithmId::kMomentumLocalSgdaPlus) {
        cfg.step.alpha = 0.5;
        cfg.step.beta_x = cfg.step.beta_y = 1.5;
      }
      cfg.sync.s_interval = 2 * tau;
      cfg.capture_trajectory = true;
      cfg.x0 = Vec::LinSpaced(4, -1.0, 1.0);
      cfg.y0 = Vec::Constant(3, 0.5);
      const Trace a = run_algorithm(id, one, cfg);
      const Trace b = run_algorithm(id, many, cfg);
      check_same_trajectory(a, b);
      for (const auto& r : b.records) {
        CHECK(r.sync_err_x == 0.0);
        CHECK(r.sync_err_y == 0.0);
      }
    }
  }
}

TEST_CASE("zero steps freeze every algorithm") {
  const auto p = hetero(2, 0.5);
  for (auto id : {AlgorithmId::kLocalSgda, AlgorithmId::kLocalSgdaPlus,
                  AlgorithmId::kLocalSgd, AlgorithmId::kCentralizedSgda}) {
    auto cfg = config(0.0, 0.0, 2, 20);
    cfg.sync.s_interval = 4;
    cfg.x0 = Vec::Constant(4, 0.3);
    cfg.y0 = Vec::Constant(3, -0.1);
    cfg.seed = 3;
    const Trace tr = run_algorithm(id, p, cfg);
    CHECK(tr.x_final == cfg.x0);
    if (id != AlgorithmId::kLocalSgd) CHECK(tr.y_final == cfg.y0);
  }
}

TEST_CASE("records, communication rounds and output index") {
  const auto p = hetero(3, 0.2);
  auto cfg = config(0.01, 0.02, 4, 64);
  cfg.metric_stride = 8;
  const Trace tr = run_local_sgda(p, cfg);
  REQUIRE(tr.records.size() == 8);
  for (std::size_t k = 0; k < tr.records.size(); ++k) {
    CHECK(tr.records[k].step == static_cast<std::int64_t>(k));
    CHECK(tr.records[k].t == static_cast<std::int64_t>(8 * k));
    CHECK(tr.records[k].comm_rounds == tr.records[k].t / 4);
    CHECK(tr.records[k].grad_phi_sq.has_value());
  }
  CHECK(tr.comm_rounds == 16);
  CHECK(tr.output_index >= 1);
  CHECK(tr.output_index <= 64);
  CHECK(tr.x_output.size() == 4);
}

TEST_CASE("sync error is zero right after every sync") {
  const auto p = hetero(4, 0.5);
  auto cfg = config(0.01, 0.02, 3, 30);
  int syncs = 0;
  cfg.hooks.on_state = [&](StatePhase ph, std::int64_t, std::span<const ClientState> cs) {
    if (ph != StatePhase::kAfterSync) return;
    ++syncs;
    std::vector<Vec> xs, ys;
    for (const auto& c : cs) xs.push_back(c.x), ys.push_back(c.y);
    const SyncError e = sync_error(xs, ys);
    CHECK(e.delta_x == 0.0);
    CHECK(e.delta_y == 0.0);
  };
  run_local_sgda(p, cfg);
  CHECK(syncs == 10);
}

TEST_CASE("invalid configurations are rejected") {
  const auto p = hetero(5, 0.0);
  auto cfg = config(0.01, 0.01, 3, 10);
  CHECK_THROWS_AS(run_local_sgda(p, cfg), std::invalid_argument);
  cfg.sync.horizon_T = 12;
  CHECK_THROWS_AS(run_local_sgda_plus(p, cfg), std::invalid_argument);  // no S
  cfg.x0 = Vec::Zero(2);
  CHECK_THROWS_AS(run_local_sgda(p, cfg), std::invalid_argument);
  cfg.x0 = Vec();
  cfg.step.alpha = 0.5;
  cfg.step.beta_x = 4.0;
  CHECK_THROWS_AS(run_momentum_local_sgda(p, cfg), std::invalid_argument);
}

TEST_CASE("divergence is reported") {
  const auto p = scalar(-1.0, 1.0, 2.0);
  auto cfg = config(50.0, 50.0, 1, 400);
  cfg.x0 = v1(1.0);
  CHECK_THROWS_AS(run_local_sgda(p, cfg), std::runtime_error);
}

TEST_CASE("momentum direction update arithmetic") {
  // gx = 1 everywhere; with the reset policy and tau = 1 the direction is 0
  // entering every step, so after one update it is beta * alpha * 1.
  QuadraticClient lin{m1(0.0), m1(0.0), m1(0.0), v1(1.0), v1(0.0)};
  const ProblemInstance p({lin}, ProblemClass::kNcC, 0.0, {}, 0.0, 0);
  auto cfg = config(0.1, 0.1, 1, 3);
  cfg.step.alpha = 0.1;
  cfg.step.beta_x = cfg.step.beta_y = 3.0;
  cfg.momentum_sync = MomentumSync::kReset;
  std::vector<double> after_update;
  cfg.hooks.on_state = [&](StatePhase ph, std::int64_t, std::span<const ClientState> cs) {
    if (ph == StatePhase::kAfterLocalUpdate) after_update.push_back(cs[0].dx[0]);
  };
  run_momentum_local_sgda(p, cfg);
  REQUIRE(after_update.size() == 3);
  // Step 0 starts from d = g = 1 and stays there; later steps start from 0.
  CHECK(after_update[0] == 1.0);
  CHECK(after_update[1] == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(after_update[2] == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("constant gradient is a fixed point of the direction update") {
  QuadraticClient lin{Mat::Zero(2, 2), Mat::Zero(2, 2), Mat::Zero(2, 2),
                      (Vec(2) << 0.3, -2.0).finished(), (Vec(2) << 1.0, 0.1).finished()};
  const ProblemInstance p(std::vector<QuadraticClient>(2, lin), ProblemClass::kNcC, 0.0,
                          {}, 0.0, 0);
  auto cfg = config(0.05, 0.05, 2, 20);
  cfg.step.alpha = 0.4;
  cfg.step.beta_x = cfg.step.beta_y = 2.0;
  int seen = 0;
  cfg.hooks.on_state = [&](StatePhase, std::int64_t, std::span<const ClientState> cs) {
    for (const auto& c : cs) {
      CHECK(c.dx == lin.c);
      CHECK(c.dy == lin.d);
      ++seen;
    }
  };
  run_momentum_local_sgda(p, cfg);
  CHECK(seen == 2 * (20 + 10));
}

TEST_CASE("alpha * beta = 1 makes momentum SGDA a rescaled SGDA") {
  GeneratorParams g;
  g.d1 = 3;
  g.d2 = 3;
  g.sigma = 0.4;
  g.seed = 10;
  const auto p = make_quadratic(g);
  auto mcfg = config(0.2, 0.4, 1, 200);
  mcfg.step.alpha = 0.25;
  mcfg.step.beta_x = mcfg.step.beta_y = 4.0;
  mcfg.capture_trajectory = true;
  mcfg.seed = 4;
  mcfg.x0 = Vec::Ones(3);
  auto scfg = config(0.05, 0.1, 1, 200);
  scfg.capture_trajectory = true;
  scfg.seed = 4;
  scfg.x0 = Vec::Ones(3);
  const Trace m = run_momentum_local_sgda(p, mcfg);
  const Trace s = run_local_sgda(p, scfg);
  REQUIRE(m.traj_x.size() == s.traj_x.size());
  double worst = 0.0;
  for (std::size_t k = 0; k < m.traj_x.size(); ++k) {
    worst = std::max(worst, (m.traj_x[k] - s.traj_x[k]).norm());
    worst = std::max(worst, (m.traj_y[k] - s.traj_y[k]).norm());
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("momentum SGDA+ holds the iterate on the step after a sync") {
  const auto p = hetero(7, 0.3);
  auto cfg = config(0.05, 0.05, 2, 12);
  cfg.sync.s_interval = 4;
  cfg.step.alpha = 0.5;
  cfg.step.beta_x = cfg.step.beta_y = 1.5;
  cfg.momentum_sync = MomentumSync::kKeep;  // ignored by this variant
  std::vector<Vec> synced;
  std::vector<std::vector<Vec>> updated;
  cfg.hooks.on_state = [&](StatePhase ph, std::int64_t t, std::span<const ClientState> cs) {
    if (ph == StatePhase::kAfterSync) {
      for (const auto& c : cs) {
        CHECK(c.dx.isZero(0.0));
        CHECK(c.dy.isZero(0.0));
      }
      synced.push_back(cs[0].x);
    } else if (t % 2 == 0 && t > 0) {
      // first local step after the sync at t - 1
      for (const auto& c : cs) CHECK(c.x == synced.back());
      for (const auto& c : cs) CHECK_FALSE(c.dx.isZero(0.0));
    }
  };
  const Trace tr = run_momentum_local_sgda_plus(p, cfg);
  CHECK(tr.momentum_sync == MomentumSync::kReset);
  CHECK(synced.size() == 6);
}

TEST_CASE("momentum SGDA+ with tau = 1 never moves") {
  // Directions are zeroed at every sync, so every half step is x - eta * 0.
  const auto p = hetero(8, 0.5);
  auto cfg = config(0.05, 0.05, 1, 50);
  cfg.sync.s_interval = 50;
  cfg.step.alpha = 0.5;
  cfg.step.beta_x = cfg.step.beta_y = 2.0;
  cfg.x0 = Vec::Constant(4, 0.2);
  cfg.y0 = Vec::Constant(3, -0.3);
  const Trace m = run_momentum_local_sgda_plus(p, cfg);
  // Step 0 uses the initial gradient; everything after is held.
  auto one = cfg;
  one.sync.horizon_T = 1;
  one.sync.s_interval = 1;
  const Trace first = run_momentum_local_sgda_plus(p, one);
  CHECK(m.x_final == first.x_final);
  CHECK(m.y_final == first.y_final);
  const Trace plus = run_local_sgda_plus(p, cfg);
  CHECK((plus.x_final - first.x_final).norm() > 1e-3);
}

TEST_CASE("local SGDA+ with a single snapshot uses x0 for every y-gradient") {
  const auto p = hetero(9, 0.3);
  auto cfg = config(0.05, 0.05, 2, 40);
  cfg.sync.s_interval = 40;
  cfg.x0 = Vec::Constant(4, 0.9);
  int calls = 0;
  cfg.hooks.on_grad = [&](const GradCall& c) {
    if (c.block != GradBlock::kY) return;
    CHECK(c.x_arg == cfg.x0);
    ++calls;
  };
  const Trace tr = run_local_sgda_plus(p, cfg);
  CHECK(calls == 3 * 40);
  REQUIRE(tr.snapshot_steps.size() == 1);
  CHECK(tr.snapshot_steps[0] == 40);
}

TEST_CASE("local SGDA+ with tau = S = 1 replays local SGDA") {
  // The snapshot is the freshly averaged x, which every client holds.
  const auto p = hetero(10, 0.4);
  auto cfg = config(0.03, 0.06, 1, 100);
  cfg.sync.s_interval = 1;
  cfg.capture_trajectory = true;
  cfg.seed = 2;
  const Trace a = run_local_sgda_plus(p, cfg);
  const Trace b = run_local_sgda(p, cfg);
  check_same_trajectory(a, b);
}

TEST_CASE("local SGDA+ lags the y-gradient argument") {
  const auto p = hetero(11, 0.0);
  auto cfg = config(0.05, 0.05, 1, 30);
  cfg.sync.s_interval = 3;
  cfg.capture_trajectory = true;
  cfg.metric_stride = 1;
  std::vector<Vec> args;
  cfg.hooks.on_grad = [&](const GradCall& c) {
    if (c.block == GradBlock::kY && c.client == 0) args.push_back(c.x_arg);
  };
  const Trace tr = run_local_sgda_plus(p, cfg);
  REQUIRE(args.size() == 30);
  for (std::size_t t = 0; t < 30; ++t) {
    CHECK(args[t] == tr.traj_x[t - t % 3]);
  }
}

TEST_CASE("local SGD with tau = 1 is gradient descent") {
  GeneratorParams g;
  g.class_tag = ProblemClass::kMinimization;
  g.d1 = 5;
  g.d2 = 1;
  g.mu = 0.2;
  g.q_pos = 1.0;
  g.seed = 3;
  const auto p = make_quadratic(g);
  const auto& q = p.clients()[0];
  auto cfg = config(0.2, 0.0, 1, 200);
  cfg.x0 = Vec::Constant(5, 2.0);
  cfg.metric_stride = 200;
  const Trace tr = run_local_sgd(p, cfg);

  Vec x = cfg.x0;
  const Vec y0 = Vec::Zero(1);
  for (int t = 0; t < 200; ++t) x -= 0.2 * p.grad_x(0, x, y0);
  CHECK(tr.x_final == x);

  // f(x_T) - f* <= (1 - eta mu)^{2T} (f(x_0) - f*)
  const Vec xs = q.Q.llt().solve(-(q.c + q.B * y0));
  auto fx = [&](const Vec& z) { return p.value(0, z, y0); };
  const double bound = std::pow(1.0 - 0.2 * 0.2, 400) * (fx(cfg.x0) - fx(xs));
  CHECK(fx(tr.x_final) - fx(xs) <= bound * (1.0 + 1e-9) + 1e-15);
}

TEST_CASE("local SGD step precondition") {
  GeneratorParams g;
  g.class_tag = ProblemClass::kMinimization;
  g.n = 2;
  g.d1 = 3;
  g.d2 = 1;
  g.q_pos = 1.0;
  g.seed = 1;
  const auto p = make_quadratic(g);
  const double L =
      Eigen::SelfAdjointEigenSolver<Mat>(p.clients()[0].Q).eigenvalues().cwiseAbs().maxCoeff();
  CHECK(L == doctest::Approx(1.0));
  auto cfg = config(0.26 / L, 0.0, 1, 10);
  CHECK_THROWS_AS(run_local_sgd(p, cfg), std::invalid_argument);  // > 1/(4L)
  cfg.step.eta_x = 0.2 / L;
  cfg.sync.tau = 5;
  CHECK_THROWS_AS(run_local_sgd(p, cfg), std::invalid_argument);  // > 1/(8L*4)
  cfg.step.eta_x = 0.999 / (32.0 * L);
  CHECK_NOTHROW(run_local_sgd(p, cfg));
}

// The recorded metric is the squared Moreau-gradient norm.
TEST_CASE("NC-C Theorem-3 run shrinks the Moreau gradient metric") {
  GeneratorParams g;
  g.class_tag = ProblemClass::kNcC;
  g.n = 4;
  g.d1 = 3;
  g.d2 = 4;
  g.sigma = 0.1;
  g.seed = 2;
  const auto p = make_quadratic(g);
  const double L = lipschitz_constant(p);
  const auto sched = schedule_from_theorem(TheoremId::kT3, 4, 4096, L, 1.0);
  AlgorithmConfig cfg;
  cfg.step = sched.step;
  cfg.sync = sched.sync;
  cfg.metric_stride = 4096;
  cfg.x0 = Vec::Constant(3, 1.5);
  double first = 0.0, last = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    cfg.seed = seed;
    const Trace tr = run_local_sgda_plus(p, cfg);
    first += *tr.records.front().moreau_grad_sq;
    last += moreau_grad(p, tr.x_final).squaredNorm();
  }
  CHECK(last / first <= 0.1);
}
