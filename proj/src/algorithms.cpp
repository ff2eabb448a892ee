#include "fedminimax/algorithms.hpp"

#include <cmath>
#include <stdexcept>

#include "fedminimax/oracles.hpp"

namespace fedminimax {

const char* to_string(AlgorithmId id) {
  switch (id) {
    case AlgorithmId::kLocalSgda: return "local_sgda";
    case AlgorithmId::kMomentumLocalSgda: return "momentum_local_sgda";
    case AlgorithmId::kLocalSgdaPlus: return "local_sgda_plus";
    case AlgorithmId::kMomentumLocalSgdaPlus: return "momentum_local_sgda_plus";
    case AlgorithmId::kLocalSgd: return "local_sgd";
    case AlgorithmId::kCentralizedSgda: return "centralized_sgda";
  }
  return "?";
}

AlgorithmId algorithm_from_string(const std::string& s) {
  for (auto id : {AlgorithmId::kLocalSgda, AlgorithmId::kMomentumLocalSgda,
                  AlgorithmId::kLocalSgdaPlus,
                  AlgorithmId::kMomentumLocalSgdaPlus, AlgorithmId::kLocalSgd,
                  AlgorithmId::kCentralizedSgda}) {
    if (s == to_string(id)) return id;
  }
  throw std::invalid_argument("unknown algorithm: " + s);
}

const char* to_string(MomentumSync m) {
  switch (m) {
    case MomentumSync::kAverage: return "average";
    case MomentumSync::kReset: return "reset";
    case MomentumSync::kKeep: return "keep";
  }
  return "?";
}

MomentumSync momentum_sync_from_string(const std::string& s) {
  if (s == "average") return MomentumSync::kAverage;
  if (s == "reset") return MomentumSync::kReset;
  if (s == "keep") return MomentumSync::kKeep;
  throw std::invalid_argument("unknown momentum sync policy: " + s);
}

const char* to_string(NoiseMode m) {
  return m == NoiseMode::kIndependent ? "independent" : "shared";
}

NoiseMode noise_mode_from_string(const std::string& s) {
  if (s == "independent") return NoiseMode::kIndependent;
  if (s == "shared") return NoiseMode::kSharedSample;
  throw std::invalid_argument("unknown noise mode: " + s);
}

Vec client_mean(std::span<const Vec> values) {
  if (values.empty()) throw std::invalid_argument("client_mean: no clients");
  const Vec& base = values[0];
  Vec acc = Vec::Zero(base.size());
  for (std::size_t i = 1; i < values.size(); ++i) acc += values[i] - base;
  return base + acc / static_cast<double>(values.size());
}

namespace {

template <typename Member>
Vec mean_of(std::span<const ClientState> clients, Member member) {
  std::vector<Vec> vals;
  vals.reserve(clients.size());
  for (const auto& c : clients) vals.push_back(c.*member);
  return client_mean(vals);
}

}  // namespace

void sync_models(std::span<ClientState> clients, ServerState& server,
                 MomentumSync directions) {
  std::span<const ClientState> view(clients.data(), clients.size());
  server.x_bar = mean_of(view, &ClientState::x);
  server.y_bar = mean_of(view, &ClientState::y);
  const bool has_dirs = clients[0].dx.size() > 0;
  Vec dx_bar, dy_bar;
  if (has_dirs && directions == MomentumSync::kAverage) {
    dx_bar = mean_of(view, &ClientState::dx);
    dy_bar = mean_of(view, &ClientState::dy);
  }
  for (auto& c : clients) {
    c.x = server.x_bar;
    c.y = server.y_bar;
    if (!has_dirs) continue;
    switch (directions) {
      case MomentumSync::kAverage:
        c.dx = dx_bar;
        c.dy = dy_bar;
        break;
      case MomentumSync::kReset:
        c.dx.setZero();
        c.dy.setZero();
        break;
      case MomentumSync::kKeep:
        break;
    }
  }
  ++server.round_count;
}

namespace {

struct Flavor {
  bool momentum = false;
  bool snapshot = false;
  bool minimize_only = false;
};

Flavor flavor_of(AlgorithmId id) {
  switch (id) {
    case AlgorithmId::kLocalSgda: return {false, false, false};
    case AlgorithmId::kMomentumLocalSgda: return {true, false, false};
    case AlgorithmId::kLocalSgdaPlus: return {false, true, false};
    case AlgorithmId::kMomentumLocalSgdaPlus: return {true, true, false};
    case AlgorithmId::kLocalSgd: return {false, false, true};
    case AlgorithmId::kCentralizedSgda: break;
  }
  throw std::invalid_argument("not a local-update algorithm");
}

double minimization_smoothness(const ProblemInstance& p) {
  double L = 0.0;
  for (const auto& q : p.clients()) {
    const Vec ev =
        Eigen::SelfAdjointEigenSolver<Mat>(q.Q, Eigen::EigenvaluesOnly).eigenvalues();
    L = std::max(L, ev.cwiseAbs().maxCoeff());
  }
  return L;
}

class Runner {
 public:
  Runner(AlgorithmId id, const ProblemInstance& p, const AlgorithmConfig& cfg)
      : id_(id), flavor_(flavor_of(id)), p_(p), cfg_(cfg), eval_(p) {
    validate();
    const int n = p.n();
    x0_ = cfg.x0.size() ? cfg.x0 : Vec::Zero(p.d1());
    y0_ = cfg.y0.size() ? cfg.y0 : Vec::Zero(p.d2());
    if (p.constrained() && !flavor_.minimize_only) y0_ = project_y(p, y0_);
    clients_.resize(n);
    for (int i = 0; i < n; ++i) {
      auto& c = clients_[i];
      c.x = x0_;
      c.y = y0_;
      c.streams = NoiseStreams(cfg.seed, static_cast<std::uint32_t>(i), cfg.noise);
    }
    server_.x_bar = x0_;
    server_.y_bar = y0_;
    server_.x_snapshot = x0_;

    trace_.algorithm = id;
    trace_.seed = cfg.seed;
    trace_.T = cfg.sync.horizon_T;
    trace_.tau = cfg.sync.tau;
    trace_.s_interval = flavor_.snapshot ? cfg.sync.s_interval : std::nullopt;
    trace_.step = cfg.step;
    trace_.momentum_sync = id == AlgorithmId::kMomentumLocalSgdaPlus
                               ? MomentumSync::kReset
                               : cfg.momentum_sync;
    trace_.noise = cfg.noise;
    trace_.projected = p.constrained() && !flavor_.minimize_only;

    RngStream out_rng(cfg.seed, {static_cast<std::uint32_t>(n),
                                 StreamPurpose::kOutputIndex});
    output_t_ = 1 + static_cast<std::int64_t>(out_rng.next_below(
                        static_cast<std::uint64_t>(cfg.sync.horizon_T)));
    trace_.output_index = output_t_;
  }

  Trace run() {
    const std::int64_t T = cfg_.sync.horizon_T;
    const int tau = cfg_.sync.tau;
    const int S = flavor_.snapshot ? *cfg_.sync.s_interval : 0;

    if (flavor_.momentum) init_directions();

    for (std::int64_t t = 0; t < T; ++t) {
      if (t % cfg_.metric_stride == 0) record(t);
      if (t == output_t_) trace_.x_output = virtual_x();

      for (int i = 0; i < p_.n(); ++i) {
        if (flavor_.momentum) momentum_step(t, i);
        else plain_step(t, i);
      }
      notify(StatePhase::kAfterLocalUpdate, t);

      if ((t + 1) % tau == 0) {
        sync_models(clients_, server_, trace_.momentum_sync);
        notify(StatePhase::kAfterSync, t);
      }
      if (flavor_.snapshot && (t + 1) % S == 0) {
        server_.x_snapshot = virtual_x();
        ++server_.snapshot_count;
        trace_.snapshot_steps.push_back(t + 1);
      }
    }

    trace_.x_final = virtual_x();
    trace_.y_final = virtual_y();
    if (output_t_ == T) trace_.x_output = trace_.x_final;
    trace_.comm_rounds = server_.round_count;
    if (!all_finite(trace_.x_final) || !all_finite(trace_.y_final)) {
      throw std::runtime_error("iterates diverged (non-finite final average)");
    }
    return std::move(trace_);
  }

 private:
  void validate() const {
    cfg_.sync.validate();
    cfg_.step.validate(flavor_.momentum);
    if (cfg_.metric_stride < 1) throw std::invalid_argument("metric_stride must be >= 1");
    if (cfg_.x0.size() && cfg_.x0.size() != p_.d1()) {
      throw std::invalid_argument("x0 dimension does not match the problem");
    }
    if (cfg_.y0.size() && cfg_.y0.size() != p_.d2()) {
      throw std::invalid_argument("y0 dimension does not match the problem");
    }
    if (flavor_.snapshot && !cfg_.sync.s_interval) {
      throw std::invalid_argument("snapshot algorithms need the interval S");
    }
    if (flavor_.minimize_only) {
      const double L = minimization_smoothness(p_);
      const int tau = cfg_.sync.tau;
      double cap = 1.0 / (4.0 * L);
      if (tau > 1) cap = std::min(cap, 1.0 / (8.0 * L * (tau - 1)));
      if (L > 0.0 && cfg_.step.eta_x > cap) {
        throw std::invalid_argument(
            "local SGD step violates eta <= min(1/(4L), 1/(8L(tau-1)))");
      }
    }
  }

  Vec virtual_x() const {
    return mean_of(std::span<const ClientState>(clients_), &ClientState::x);
  }
  Vec virtual_y() const {
    return mean_of(std::span<const ClientState>(clients_), &ClientState::y);
  }

  void notify(StatePhase phase, std::int64_t t) const {
    if (cfg_.hooks.on_state) cfg_.hooks.on_state(phase, t, clients_);
  }

  void report(std::int64_t t, int i, GradBlock b, const Vec& x, const Vec& y,
              const Vec& g) const {
    if (cfg_.hooks.on_grad) cfg_.hooks.on_grad(GradCall{t, i, b, x, y, g});
  }

  Vec grad_x(std::int64_t t, int i, const Vec& x, const Vec& y) {
    Vec g = stochastic_grad_x(p_, i, x, y, clients_[i].streams);
    report(t, i, GradBlock::kX, x, y, g);
    return g;
  }

  Vec grad_y(std::int64_t t, int i, const Vec& x, const Vec& y) {
    Vec g = stochastic_grad_y(p_, i, x, y, clients_[i].streams);
    report(t, i, GradBlock::kY, x, y, g);
    return g;
  }

  // x-argument of y-gradients: the snapshot for the "+" algorithms.
  const Vec& y_grad_x_arg(const Vec& local_x) const {
    return flavor_.snapshot ? server_.x_snapshot : local_x;
  }

  void plain_step(std::int64_t t, int i) {
    auto& c = clients_[i];
    if (flavor_.minimize_only) {
      const Vec gx = grad_x(t, i, c.x, y0_);
      c.x -= cfg_.step.eta_x * gx;
      return;
    }
    const Vec gx = grad_x(t, i, c.x, c.y);
    const Vec gy = grad_y(t, i, y_grad_x_arg(c.x), c.y);
    c.x -= cfg_.step.eta_x * gx;
    c.y += cfg_.step.eta_y * gy;
    if (trace_.projected) c.y = project_y(p_, c.y);
  }

  void init_directions() {
    for (int i = 0; i < p_.n(); ++i) {
      auto& c = clients_[i];
      c.dx = grad_x(-1, i, c.x, c.y);
      c.dy = grad_y(-1, i, y_grad_x_arg(c.x), c.y);
    }
  }

  void momentum_step(std::int64_t t, int i) {
    auto& c = clients_[i];
    const auto& s = cfg_.step;
    const Vec x_half = c.x - s.eta_x * c.dx;
    const Vec y_half = c.y + s.eta_y * c.dy;
    c.x = c.x + s.alpha * (x_half - c.x);
    c.y = c.y + s.alpha * (y_half - c.y);
    if (trace_.projected) c.y = project_y(p_, c.y);
    const Vec gx = grad_x(t, i, c.x, c.y);
    const Vec gy = grad_y(t, i, y_grad_x_arg(c.x), c.y);
    const double wx = s.beta_x * s.alpha;
    const double wy = s.beta_y * s.alpha;
    // d + w (g - d): leaves d untouched bit-for-bit when g == d.
    c.dx += wx * (gx - c.dx);
    c.dy += wy * (gy - c.dy);
  }

  void record(std::int64_t t) {
    MetricRecord rec;
    rec.step = static_cast<std::int64_t>(trace_.records.size());
    rec.t = t;
    rec.comm_rounds = t / cfg_.sync.tau;
    std::vector<Vec> xs, ys;
    xs.reserve(clients_.size());
    ys.reserve(clients_.size());
    for (const auto& c : clients_) {
      xs.push_back(c.x);
      ys.push_back(c.y);
    }
    const Vec x = client_mean(xs);
    const Vec y = client_mean(ys);
    if (!all_finite(x) || !all_finite(y)) {
      throw std::runtime_error("iterates diverged at t = " + std::to_string(t));
    }
    const SyncError se = sync_error(xs, ys);
    rec.sync_err_x = se.delta_x;
    rec.sync_err_y = flavor_.minimize_only ? 0.0 : se.delta_y;
    if (flavor_.minimize_only) {
      rec.grad_phi_sq = p_.mean_grad(x, y0_).gx.squaredNorm();
    } else {
      eval_.evaluate(x, y, rec);
    }
    if (flavor_.momentum) {
      const Vec dx = mean_of(std::span<const ClientState>(clients_), &ClientState::dx);
      const Vec dy = mean_of(std::span<const ClientState>(clients_), &ClientState::dy);
      rec.dir_err_x = (p_.mean_grad(x, y).gx - dx).norm();
      const Vec gy = p_.mean_grad(y_grad_x_arg(x), y).gy;
      rec.dir_err_y = (gy - dy).norm();
    }
    trace_.records.push_back(rec);
    if (cfg_.capture_trajectory) {
      trace_.traj_x.push_back(x);
      trace_.traj_y.push_back(y);
    }
  }

  AlgorithmId id_;
  Flavor flavor_;
  const ProblemInstance& p_;
  const AlgorithmConfig& cfg_;
  MetricEvaluator eval_;
  Vec x0_, y0_;
  std::vector<ClientState> clients_;
  ServerState server_;
  Trace trace_;
  std::int64_t output_t_ = 1;
};

}  // namespace

Trace run_local_sgda(const ProblemInstance& p, const AlgorithmConfig& cfg) {
  return Runner(AlgorithmId::kLocalSgda, p, cfg).run();
}

Trace run_momentum_local_sgda(const ProblemInstance& p,
                              const AlgorithmConfig& cfg) {
  return Runner(AlgorithmId::kMomentumLocalSgda, p, cfg).run();
}

Trace run_local_sgda_plus(const ProblemInstance& p, const AlgorithmConfig& cfg) {
  return Runner(AlgorithmId::kLocalSgdaPlus, p, cfg).run();
}

Trace run_momentum_local_sgda_plus(const ProblemInstance& p,
                                   const AlgorithmConfig& cfg) {
  return Runner(AlgorithmId::kMomentumLocalSgdaPlus, p, cfg).run();
}

Trace run_local_sgd(const ProblemInstance& p, const AlgorithmConfig& cfg) {
  return Runner(AlgorithmId::kLocalSgd, p, cfg).run();
}

Trace run_algorithm(AlgorithmId id, const ProblemInstance& p,
                    const AlgorithmConfig& cfg) {
  if (id == AlgorithmId::kCentralizedSgda) return centralized_sgda_reference(p, cfg);
  return Runner(id, p, cfg).run();
}

}  // namespace fedminimax
