#include "fedminimax/acceptance.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "fedminimax/algorithms.hpp"
#include "fedminimax/envelope.hpp"
#include "fedminimax/harness.hpp"
#include "fedminimax/metrics.hpp"
#include "fedminimax/oracles.hpp"

namespace fedminimax {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

// Family of the rate criteria: d1 = d2 = 10, kappa close to 4. Phi's
// curvature (3) is close to L_f so that eta_x T h_min is well above 1 on
// the T-grid; with h_min / L_f ~ 0.2 the runs stay in the initial transient.
json rate_family(const char* class_tag) {
  return {{"class_tag", class_tag}, {"n", 8},       {"d1", 10},      {"d2", 10},
          {"mu", 0.75},             {"m_max", 1.0}, {"h_min", 3.0},  {"h_max", 3.0},
          {"coupling", 1.5},        {"sigma", 0.5}, {"seed", 0}};
}

RunManifest sweep(json doc, const AcceptanceOptions& opts, const std::string& sub) {
  doc["output_dir"] = (opts.work_dir / sub).string();
  const ExperimentConfig cfg = parse_config(doc);
  SweepOptions so;
  so.threads = opts.threads;
  RunManifest m = run_sweep(cfg, so);
  for (const auto& c : m.cells) {
    if (c.skipped) {
      throw std::runtime_error("cell " + std::to_string(c.index) + " skipped: " +
                               c.skip_reason);
    }
  }
  return m;
}

bool bit_equal(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) return false;
  for (Eigen::Index k = 0; k < a.size(); ++k) {
    if (!(a[k] == b[k])) return false;
  }
  return true;
}

// 1 ----------------------------------------------------------------------
void tau1_equivalence(AcceptanceReport& r, const AcceptanceOptions&) {
  GeneratorParams g;
  g.class_tag = ProblemClass::kNcSc;
  g.n = 2;
  g.d1 = 3;
  g.d2 = 3;
  g.sigma = 0.2;
  g.het.varsigma_x = 0.3;
  g.het.varsigma_y = 0.3;
  g.seed = 11;
  const ProblemInstance p = make_quadratic(g);

  AlgorithmConfig cfg;
  cfg.step.eta_x = 0.02;
  cfg.step.eta_y = 0.1;
  cfg.sync.tau = 1;
  cfg.sync.horizon_T = 500;
  cfg.seed = 2024;
  cfg.capture_trajectory = true;
  const Trace local = run_local_sgda(p, cfg);
  const Trace central = centralized_sgda_reference(p, cfg);

  double max_dev = 0.0;
  bool identical = local.traj_x.size() == central.traj_x.size() &&
                   local.traj_x.size() == 500;
  for (std::size_t t = 0; identical && t < local.traj_x.size(); ++t) {
    identical = bit_equal(local.traj_x[t], central.traj_x[t]) &&
                bit_equal(local.traj_y[t], central.traj_y[t]);
    max_dev = std::max({max_dev, (local.traj_x[t] - central.traj_x[t]).cwiseAbs().maxCoeff(),
                        (local.traj_y[t] - central.traj_y[t]).cwiseAbs().maxCoeff()});
  }
  identical = identical && bit_equal(local.x_final, central.x_final) &&
              bit_equal(local.y_final, central.y_final) &&
              local.output_index == central.output_index;
  if (local.x_final.size() == central.x_final.size()) {
    max_dev = std::max(max_dev, (local.x_final - central.x_final).cwiseAbs().maxCoeff());
  }
  r.passed = identical && max_dev == 0.0;
  r.measured = {{"steps", local.traj_x.size()}, {"max_abs_deviation", max_dev},
                {"bit_identical", identical}};
  r.summary = "max abs trajectory deviation " + fmt("%.3g", max_dev) +
              " over 500 steps (required: exactly 0)";
}

// 2 ----------------------------------------------------------------------
void theorem1_rate(AcceptanceReport& r, const AcceptanceOptions& opts) {
  const json doc = {
      {"problem", {{"generator", rate_family("NC_SC")}}},
      {"algorithm", "local_sgda"},
      {"schedule", {{"theorem", "T1"}}},
      {"sync", {{"T", 2000}}},
      {"seeds", {{"first", 100}, {"count", 20}}},
      {"sweep", {{"T", {2000, 4000, 8000, 16000, 32000, 64000}}}},
  };
  const RunManifest m = sweep(doc, opts, "theorem1-rate");
  const AxisFit fit = fit_over_axis(m, "T", "grad_phi_sq", Reducer::kMean,
                                    m.burn_in_fraction);
  r.passed = fit.fit.slope >= -0.65 && fit.fit.slope <= -0.35;
  json taus = json::array();
  for (const auto& c : m.cells) taus.push_back(c.tau_used);
  r.measured = {{"slope", fit.fit.slope}, {"r_squared", fit.fit.r_squared},
                {"T", fit.xs}, {"mean_grad_phi_sq", fit.ys},
                {"dropped_points", fit.dropped}, {"tau", taus}};
  r.summary = "log-log slope " + fmt("%.3f", fit.fit.slope) + " (r^2 " +
              fmt("%.3f", fit.fit.r_squared) + ", " +
              std::to_string(fit.xs.size() - fit.dropped) +
              " T values after burn-in), band [-0.65, -0.35]";
}

// 3 ----------------------------------------------------------------------
void linear_speedup(AcceptanceReport& r, const AcceptanceOptions& opts) {
  const json doc = {
      {"problem", {{"generator", rate_family("NC_SC")}}},
      {"algorithm", "local_sgda"},
      {"schedule", {{"theorem", "T1"}}},
      {"sync", {{"T", 20000}}},
      {"seeds", {{"first", 200}, {"count", 30}}},
      {"sweep", {{"n", {4, 16}}}},
  };
  const RunManifest m = sweep(doc, opts, "linear-speedup");
  const auto rows = aggregate(m, "grad_phi_sq", Reducer::kMean);
  double e4 = 0.0, e16 = 0.0;
  for (const auto& row : rows) (row.axes.n == 4 ? e4 : e16) = row.mean;
  const double ratio = e16 / e4;
  r.passed = ratio >= 0.35 && ratio <= 0.70;
  r.measured = {{"err_n4", e4}, {"err_n16", e16}, {"ratio", ratio}};
  r.summary = "err(n=16)/err(n=4) = " + fmt("%.3f", ratio) + ", band [0.35, 0.70]";
}

// 4 ----------------------------------------------------------------------
void sync_error_law(AcceptanceReport& r, const AcceptanceOptions& opts) {
  json gen = rate_family("NC_SC");
  gen["het"] = {{"varsigma_x", 0.5}, {"varsigma_y", 0.5}, {"mode", "offset"}};
  gen["seed"] = 3;
  const json doc = {
      {"problem", {{"generator", gen}}},
      {"algorithm", "local_sgda"},
      {"schedule", {{"eta_x", 1e-3}, {"eta_y", 1e-3}}},
      {"sync", {{"T", 8000}}},
      {"seeds", {{"first", 300}, {"count", 10}}},
      {"sweep", {{"tau", {2, 4, 8, 16}}}},
  };
  const RunManifest m = sweep(doc, opts, "sync-error-law");
  const auto dx = aggregate(m, "delta_x", Reducer::kMean);
  const auto dy = aggregate(m, "delta_y", Reducer::kMean);
  std::vector<double> xs, ys;
  for (std::size_t k = 0; k < dx.size(); ++k) {
    xs.push_back(dx[k].axes.tau - 1.0);
    ys.push_back(dx[k].mean + dy[k].mean);
  }
  const RateFit fit = fit_rate(xs, ys);
  r.passed = fit.slope >= 1.6 && fit.slope <= 2.4;
  r.measured = {{"tau_minus_1", xs}, {"mean_delta", ys}, {"slope", fit.slope},
                {"r_squared", fit.r_squared}};
  r.summary = "slope of log Delta vs log(tau-1) " + fmt("%.3f", fit.slope) +
              ", band [1.6, 2.4]";
}

// 5 ----------------------------------------------------------------------
void moreau_gradient(AcceptanceReport& r, const AcceptanceOptions&) {
  double worst_fd = 0.0, worst_ref = 0.0;
  bool identity = true;
  for (std::uint64_t s = 0; s < 20; ++s) {
    GeneratorParams g;
    g.class_tag = ProblemClass::kNcC;
    g.n = 1;
    g.d1 = 5 + static_cast<int>(s % 3);
    g.d2 = 2 + static_cast<int>(s % 2);
    g.seed = 500 + s;
    const ProblemInstance p = make_quadratic(g);
    RngStream rng(s, {0, StreamPurpose::kSampling});
    const Vec x = draw_gaussian(rng, p.d1(), 1.5 * std::sqrt(p.d1()));

    const double L = lipschitz_constant(p);
    const double lambda = 1.0 / (2.0 * L);
    const Vec grad = moreau_grad(p, x);

    const EnvelopeModel env(p);
    const ProxSolver prox(env, 2.0 * L);
    const Vec x_hat = prox.prox(x);
    identity = identity && bit_equal(grad, (x - x_hat) * (2.0 * L));

    const ProxReference ref = prox_reference(p, x, lambda);
    worst_ref = std::max(worst_ref, (ref.x_hat - x_hat).norm() / (1.0 + x_hat.norm()));

    const Vec fd = finite_diff_grad(
        [&](const Vec& z) { return prox_reference(p, z, lambda).envelope_value; }, x);
    worst_fd = std::max(worst_fd, (fd - grad).norm() / std::max(grad.norm(), 1e-12));
  }
  r.passed = identity && worst_fd <= 1e-3;
  r.measured = {{"instances", 20}, {"max_rel_error_vs_fd", worst_fd},
                {"identity_exact", identity}, {"max_prox_disagreement", worst_ref}};
  r.summary = "max rel. error vs finite differences " + fmt("%.2e", worst_fd) +
              " (band <= 1e-3), 2L_f(x - prox) identity " +
              (identity ? "exact" : "violated") + " on 20 instances";
}

// 6 ----------------------------------------------------------------------
void pl_growth(AcceptanceReport& r, const AcceptanceOptions&) {
  double pl_min = std::numeric_limits<double>::infinity();
  double qg_min = pl_min;
  int count = 0;
  bool ok = true;
  const int dims[][2] = {{10, 10}, {5, 6}, {4, 9}, {8, 3}};
  for (std::uint64_t s = 0; s < 20; ++s) {
    GeneratorParams g;
    g.class_tag = ProblemClass::kNcPl;
    g.n = 4;
    g.d1 = dims[s % 4][0];
    g.d2 = dims[s % 4][1];
    g.mu = 0.3;
    g.het.varsigma_x = 0.3;
    g.het.varsigma_y = 0.3;
    g.seed = 600 + s;
    const ProblemInstance p = make_quadratic(g);
    const AssumptionReport rep = validate_assumptions(p, 1000, s);
    ++count;
    if (!rep.pl_min_slack || !rep.qg_min_slack) {
      ok = false;
      continue;
    }
    pl_min = std::min(pl_min, *rep.pl_min_slack);
    qg_min = std::min(qg_min, *rep.qg_min_slack);
    ok = ok && rep.pl_ok && rep.qg_ok;
  }
  r.passed = ok && pl_min >= -1e-8 && qg_min >= -1e-8;
  r.measured = {{"instances", count}, {"points_per_instance", 1000},
                {"min_pl_slack", pl_min}, {"min_qg_slack", qg_min}};
  r.summary = "min PL slack " + fmt("%.3e", pl_min) + ", min QG slack " +
              fmt("%.3e", qg_min) + " over " + std::to_string(count) +
              " x 1000 points (required >= -1e-8)";
}

// 7 ----------------------------------------------------------------------
void snapshot_semantics(AcceptanceReport& r, const AcceptanceOptions&) {
  GeneratorParams g;
  g.class_tag = ProblemClass::kNcSc;
  g.n = 3;
  g.d1 = 4;
  g.d2 = 4;
  g.sigma = 0.3;
  g.het.varsigma_x = 0.2;
  g.seed = 7;
  const ProblemInstance p = make_quadratic(g);

  const int tau = 2, S = 3 * tau;
  const std::int64_t T = 60;
  AlgorithmConfig cfg;
  cfg.step.eta_x = 0.05;
  cfg.step.eta_y = 0.1;
  cfg.sync.tau = tau;
  cfg.sync.s_interval = S;
  cfg.sync.horizon_T = T;
  cfg.seed = 9;
  cfg.x0 = Vec::Constant(p.d1(), 0.5);

  std::map<std::int64_t, std::vector<Vec>> args;
  cfg.hooks.on_grad = [&](const GradCall& c) {
    if (c.block == GradBlock::kY) args[c.t].push_back(c.x_arg);
  };
  const Trace tr = run_local_sgda_plus(p, cfg);

  bool ok = static_cast<std::int64_t>(args.size()) == T;
  int changes = 0, misplaced = 0, missing = 0;
  Vec prev = cfg.x0;
  for (std::int64_t t = 0; ok && t < T; ++t) {
    const auto& v = args[t];
    if (static_cast<int>(v.size()) != p.n()) ok = false;
    for (const auto& a : v) ok = ok && bit_equal(a, v.front());
    const bool changed = !bit_equal(v.front(), prev);
    if (changed) {
      ++changes;
      if (t % S != 0) ++misplaced;
    } else if (t % S == 0 && t > 0) {
      ++missing;
    }
    prev = v.front();
  }
  for (auto s : tr.snapshot_steps) ok = ok && s % S == 0;
  r.passed = ok && misplaced == 0 && missing == 0 && changes == T / S - 1;
  r.measured = {{"S", S}, {"T", T}, {"changes", changes},
                {"changes_off_schedule", misplaced}, {"refreshes_missed", missing}};
  r.summary = std::to_string(changes) + " x-argument changes, " +
              std::to_string(misplaced) + " off the S = " + std::to_string(S) +
              " grid, " + std::to_string(missing) + " missed refreshes";
}

// 8 ----------------------------------------------------------------------
void momentum_mixing(AcceptanceReport& r, const AcceptanceOptions&) {
  // (a) linear f, identical clients, exact gradients: d_t == g for all t.
  QuadraticClient lin{Mat::Zero(3, 3), Mat::Zero(3, 2), Mat::Zero(2, 2),
                      Vec(3), Vec(2)};
  lin.c << 0.7, -1.3, 0.25;
  lin.d << -0.4, 1.1;
  const ProblemInstance flat(std::vector<QuadraticClient>(3, lin),
                             ProblemClass::kNcC, 0.0, {}, 0.0, 0);
  bool fixed_point = true;
  int checks = 0;
  for (auto policy : {MomentumSync::kAverage, MomentumSync::kKeep}) {
    AlgorithmConfig cfg;
    cfg.step = {0.05, 0.02, 0.3, 2.0, 2.0};
    cfg.sync.tau = 4;
    cfg.sync.horizon_T = 40;
    cfg.momentum_sync = policy;
    cfg.hooks.on_state = [&](StatePhase, std::int64_t, std::span<const ClientState> cs) {
      for (const auto& c : cs) {
        fixed_point = fixed_point && bit_equal(c.dx, lin.c) && bit_equal(c.dy, lin.d);
        ++checks;
      }
    };
    run_momentum_local_sgda(flat, cfg);
  }

  // (b) noisy heterogeneous run: d' = (1 - beta alpha) d + beta alpha g.
  GeneratorParams g;
  g.class_tag = ProblemClass::kNcSc;
  g.n = 3;
  g.d1 = 4;
  g.d2 = 3;
  g.sigma = 0.5;
  g.het.varsigma_x = 0.3;
  g.het.varsigma_y = 0.3;
  g.seed = 8;
  const ProblemInstance p = make_quadratic(g);
  AlgorithmConfig cfg;
  cfg.step = {0.05, 0.05, 0.4, 1.5, 2.0};
  cfg.sync.tau = 3;
  cfg.sync.horizon_T = 90;
  cfg.seed = 5;
  const double wx = cfg.step.alpha * cfg.step.beta_x;
  const double wy = cfg.step.alpha * cfg.step.beta_y;
  std::vector<Vec> dx(p.n()), dy(p.n()), gx(p.n()), gy(p.n());
  double worst = 0.0;  // in units of machine epsilon times magnitude
  const double eps = std::numeric_limits<double>::epsilon();
  auto check = [&](const Vec& old, const Vec& grad, const Vec& now, double w) {
    for (Eigen::Index k = 0; k < now.size(); ++k) {
      const double expect = (1.0 - w) * old[k] + w * grad[k];
      const double scale = std::max({1.0, std::abs(old[k]), std::abs(grad[k])});
      worst = std::max(worst, std::abs(now[k] - expect) / (eps * scale));
    }
  };
  cfg.hooks.on_grad = [&](const GradCall& c) {
    auto& slot = c.block == GradBlock::kX ? (c.t < 0 ? dx : gx) : (c.t < 0 ? dy : gy);
    slot[c.client] = c.value;
  };
  cfg.hooks.on_state = [&](StatePhase phase, std::int64_t, std::span<const ClientState> cs) {
    for (int i = 0; i < p.n(); ++i) {
      if (phase == StatePhase::kAfterLocalUpdate) {
        check(dx[i], gx[i], cs[i].dx, wx);
        check(dy[i], gy[i], cs[i].dy, wy);
      }
      dx[i] = cs[i].dx;
      dy[i] = cs[i].dy;
    }
  };
  run_momentum_local_sgda(p, cfg);

  r.passed = fixed_point && checks > 0 && worst <= 4.0;
  r.measured = {{"fixed_point_exact", fixed_point}, {"fixed_point_checks", checks},
                {"max_mixing_error_eps", worst}};
  r.summary = std::string("fixed point ") + (fixed_point ? "exact" : "violated") +
              "; mixing identity max error " + fmt("%.2f", worst) +
              " eps (band <= 4 eps)";
}

// 9 ----------------------------------------------------------------------
void momentum_parity(AcceptanceReport& r, const AcceptanceOptions& opts) {
  json base = {
      {"problem", {{"generator", rate_family("NC_PL")}}},
      {"sync", {{"T", 32000}}},
      {"seeds", {{"first", 900}, {"count", 20}}},
  };
  json plain = base;
  plain["algorithm"] = "local_sgda";
  plain["schedule"] = {{"theorem", "T1"}};
  json mom = base;
  mom["algorithm"] = "momentum_local_sgda";
  mom["schedule"] = {{"theorem", "T2"}};
  const auto a = aggregate(sweep(plain, opts, "momentum-parity/local_sgda"),
                           "grad_phi_sq", Reducer::kMean);
  const auto b = aggregate(sweep(mom, opts, "momentum-parity/momentum_local_sgda"),
                           "grad_phi_sq", Reducer::kMean);
  const double ratio = b.at(0).mean / a.at(0).mean;
  r.passed = ratio >= 0.5 && ratio <= 2.0;
  r.measured = {{"local_sgda", a.at(0).mean}, {"momentum_local_sgda", b.at(0).mean},
                {"ratio", ratio}};
  r.summary = "momentum / plain stationarity ratio " + fmt("%.3f", ratio) +
              ", band [0.5, 2]";
}

// 10 ---------------------------------------------------------------------
std::map<std::string, std::string> read_csvs(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".csv") continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[e.path().filename().string()] =
        std::string(std::istreambuf_iterator<char>(in), {});
  }
  return out;
}

void determinism(AcceptanceReport& r, const AcceptanceOptions& opts) {
  json gen = rate_family("NC_SC");
  gen["het"] = {{"varsigma_x", 0.5}, {"varsigma_y", 0.5}, {"mode", "offset"}};
  const std::vector<std::pair<std::string, json>> runs = {
      {"local_sgda", {{"eta_x", 0.01}, {"eta_y", 0.05}}},
      {"momentum_local_sgda", {{"eta_x", 0.05}, {"eta_y", 0.2}, {"alpha", 0.2}, {"beta_x", 3}, {"beta_y", 3}}},
      {"local_sgda_plus", {{"eta_x", 0.01}, {"eta_y", 0.05}}},
  };
  int files = 0, mismatches = 0;
  for (const auto& [alg, sched] : runs) {
    const json doc = {
        {"problem", {{"generator", gen}}},
        {"algorithm", alg},
        {"schedule", sched},
        {"sync", {{"T", 800}}},
        {"seeds", {1, 2, 3}},
        {"sweep", {{"tau", {2, 4}}, {"sigma", {0.1, 0.5}}}},
    };
    std::vector<std::map<std::string, std::string>> outs;
    int k = 0;
    for (int threads : {1, 4, 1}) {
      AcceptanceOptions o = opts;
      o.threads = threads;
      const std::string sub = "determinism/" + alg + "_run" + std::to_string(k++);
      fs::remove_all(opts.work_dir / sub);
      sweep(doc, o, sub);
      outs.push_back(read_csvs(opts.work_dir / sub));
    }
    files += static_cast<int>(outs[0].size());
    for (std::size_t j = 1; j < outs.size(); ++j) {
      if (outs[j] != outs[0]) ++mismatches;
    }
  }
  r.passed = mismatches == 0 && files > 0;
  r.measured = {{"csv_files_per_run", files}, {"mismatching_reruns", mismatches}};
  r.summary = std::to_string(files) + " CSV files compared across threads {1, 4, 1}, " +
              std::to_string(mismatches) + " mismatching reruns";
}

struct Suite {
  std::string id;
  std::string title;
  std::function<void(AcceptanceReport&, const AcceptanceOptions&)> run;
};

const std::vector<Suite>& registry() {
  static const std::vector<Suite> suites = {
      {"tau1-equivalence", "tau = 1 centralized equivalence", tau1_equivalence},
      {"theorem1-rate", "Local SGDA rate exponent in T", theorem1_rate},
      {"linear-speedup", "Linear speedup in n", linear_speedup},
      {"sync-error-law", "Synchronization error growth in tau", sync_error_law},
      {"moreau-gradient", "Moreau envelope gradient", moreau_gradient},
      {"pl-growth", "PL and quadratic growth of generated instances", pl_growth},
      {"snapshot-semantics", "Snapshot refresh schedule", snapshot_semantics},
      {"momentum-mixing", "Momentum fixed point and mixing identity", momentum_mixing},
      {"momentum-parity", "Momentum parity on NC-PL", momentum_parity},
      {"determinism", "Byte-identical reruns across thread counts", determinism},
  };
  return suites;
}

}  // namespace

const std::vector<std::string>& acceptance_ids() {
  static const std::vector<std::string> ids = [] {
    std::vector<std::string> v;
    for (const auto& s : registry()) v.push_back(s.id);
    return v;
  }();
  return ids;
}

AcceptanceReport acceptance_suite(const std::string& id, const AcceptanceOptions& opts) {
  for (const auto& s : registry()) {
    if (s.id != id) continue;
    AcceptanceReport r;
    r.id = s.id;
    r.title = s.title;
    const auto start = std::chrono::steady_clock::now();
    try {
      s.run(r, opts);
    } catch (const std::exception& e) {
      r.passed = false;
      r.summary = std::string("error: ") + e.what();
    }
    r.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
  }
  throw std::invalid_argument("unknown acceptance suite: " + id);
}

std::string format_report_line(const AcceptanceReport& r) {
  return std::string(r.passed ? "PASS " : "FAIL ") + r.id + ": " + r.summary + " (" +
         fmt("%.1f", r.seconds) + " s)";
}

}  // namespace fedminimax
