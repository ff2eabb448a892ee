#include "fedminimax/cli.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "fedminimax/acceptance.hpp"
#include "fedminimax/envelope.hpp"
#include "fedminimax/harness.hpp"
#include "fedminimax/metrics.hpp"
#include "fedminimax/oracles.hpp"

namespace fedminimax {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError(path + " is not valid JSON: " + e.what());
  }
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << text;
}

// Accepts a problem document, an experiment config or bare generator params.
ProblemInstance load_problem(const std::string& path, std::optional<std::uint64_t> seed) {
  const json doc = read_json(path);
  if (doc.value("format", std::string()) == "fedminimax-problem") {
    if (seed) throw UsageError("--seed does not apply to a stored problem");
    return problem_from_json(doc);
  }
  if (doc.contains("problem")) {
    const json& p = doc.at("problem");
    if (p.contains("file")) {
      fs::path file = p.at("file").get<std::string>();
      if (file.is_relative()) file = fs::path(path).parent_path() / file;
      return load_problem(file.string(), seed);
    }
    GeneratorParams g = generator_from_json(p.at("generator"));
    if (seed) g.seed = *seed;
    return make_quadratic(g);
  }
  GeneratorParams g = generator_from_json(doc);
  if (seed) g.seed = *seed;
  return make_quadratic(g);
}

// Applies flag overrides to the config document and records each one.
json apply_overrides(json& doc, const std::optional<std::string>& out_dir,
                     const std::optional<std::uint64_t>& seed,
                     const std::optional<int>& stride) {
  json overrides = json::object();
  if (out_dir) {
    overrides["output_dir"] = {{"config", doc.value("output_dir", json(nullptr))},
                               {"flag", *out_dir}};
    doc["output_dir"] = *out_dir;
  }
  if (seed) {
    overrides["seeds"] = {{"config", doc.value("seeds", json(nullptr))}, {"flag", *seed}};
    doc["seeds"] = json::array({*seed});
  }
  if (stride) {
    overrides["metric_stride"] = {{"config", doc.value("metric_stride", json(nullptr))},
                                  {"flag", *stride}};
    doc["metric_stride"] = *stride;
  }
  return overrides;
}

void print_manifest_summary(const RunManifest& m, std::ostream& out) {
  int run = 0, skipped = 0;
  for (const auto& c : m.cells) (c.skipped ? skipped : run) += 1;
  out << "config " << m.config_hash << ": " << run << " cells run, " << skipped
      << " skipped, " << m.seeds.size() << " seeds; manifest at "
      << (fs::path(m.output_dir) / "manifest.json").string() << "\n";
  for (const auto& c : m.cells) {
    if (c.skipped) out << "  cell " << c.index << " skipped: " << c.skip_reason << "\n";
  }
}

struct Check {
  std::string name;
  double value;
  double tolerance;
  bool passed() const { return value <= tolerance; }
};

std::vector<Check> oracle_checks(const ProblemInstance& p, std::uint64_t seed) {
  std::vector<Check> checks;
  std::optional<EnvelopeModel> env;
  try {
    env.emplace(p);
  } catch (const std::domain_error&) {
    return checks;
  }
  RngStream rng(seed, {0, StreamPurpose::kSampling});
  const double lambda = 1.0 / (2.0 * lipschitz_constant(p));
  double grad_err = 0.0, inner_err = 0.0, moreau_err = 0.0;
  bool have_grad = false, have_moreau = false;
  for (int k = 0; k < 3; ++k) {
    const Vec x = draw_gaussian(rng, p.d1(), std::sqrt(p.d1()));
    if (env->kind() == EnvelopeModel::Kind::kUnconstrained) {
      const Vec fd = finite_diff_grad([&](const Vec& z) { return env->phi(z); }, x);
      const Vec g = env->grad_phi(x);
      grad_err = std::max(grad_err, (fd - g).norm() / std::max(g.norm(), 1e-12));
      have_grad = true;
    }
    const double phi = env->phi(x);
    const InnerMaxResult bf = brute_force_inner_max(p, x, 4, 1e-10, seed + k);
    inner_err = std::max(inner_err, std::abs(bf.value - phi) / (1.0 + std::abs(phi)));
    if (p.reparam_amplitude() == 0.0) {
      const Vec mg = moreau_grad(p, x);
      const Vec fd = finite_diff_grad(
          [&](const Vec& z) { return prox_reference(p, z, lambda).envelope_value; }, x);
      moreau_err = std::max(moreau_err, (fd - mg).norm() / std::max(mg.norm(), 1e-12));
      have_moreau = true;
    }
  }
  if (have_grad) checks.push_back({"grad_phi_vs_finite_differences", grad_err, 1e-5});
  checks.push_back({"phi_vs_brute_force_inner_max", inner_err, 1e-8});
  if (have_moreau) checks.push_back({"moreau_grad_vs_finite_differences", moreau_err, 1e-3});
  return checks;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Simulator and verification harness for federated minimax optimization",
               "fedminimax"};
  app.require_subcommand(1);

  std::string config_path, out_path, manifest_path, axis, metric = "grad_phi_sq",
                                                   reducer = "mean", suite;
  std::optional<std::uint64_t> seed;
  std::optional<int> stride;
  std::optional<double> burn_in;
  int threads = 1, samples = 1000;
  bool list = false;

  auto* gen = app.add_subcommand("gen-problem", "Write a problem instance as JSON");
  gen->add_option("--config", config_path, "Generator parameters or experiment config")
      ->required();
  gen->add_option("--out", out_path, "Output file (default: stdout)");
  gen->add_option("--seed", seed, "Generator seed override");

  auto* run = app.add_subcommand("run", "Run a single cell");
  auto* sw = app.add_subcommand("sweep", "Run every cell of an experiment config");
  for (auto* sub : {run, sw}) {
    sub->add_option("--config", config_path, "Experiment config")->required();
    sub->add_option("--out", out_path, "Output directory");
    sub->add_option("--seed", seed, "Run a single seed instead of the config's list");
    sub->add_option("--threads", threads, "Worker threads (speed only)")
        ->check(CLI::PositiveNumber);
    sub->add_option("--metric-stride", stride, "Record metrics every k steps")
        ->check(CLI::PositiveNumber);
  }

  auto* verify = app.add_subcommand("verify", "Assumption report and oracle cross-checks");
  verify->add_option("--config", config_path, "Problem, generator or experiment config")
      ->required();
  verify->add_option("--out", out_path, "Report file (default: stdout)");
  verify->add_option("--seed", seed, "Sampling seed");
  verify->add_option("--samples", samples, "Random points for the checks")
      ->check(CLI::PositiveNumber);

  auto* fit = app.add_subcommand("fit", "Fit a log-log rate over a sweep axis");
  fit->add_option("--axis", axis, "n, tau, T or sigma")->required();
  fit->add_option("--metric", metric, "CSV column");
  fit->add_option("--reducer", reducer, "mean, min_over_t or final");
  fit->add_option("--burn-in", burn_in, "Leading fraction of grid points to drop");
  fit->add_option("manifest", manifest_path, "manifest.json of a sweep")->required();

  auto* acc = app.add_subcommand("accept", "Run a named acceptance suite");
  acc->add_option("suite", suite, "Suite id or 'all'");
  acc->add_flag("--list", list, "List suite ids");
  acc->add_option("--out", out_path, "Working directory for suite outputs");
  acc->add_option("--threads", threads, "Worker threads (speed only)")
      ->check(CLI::PositiveNumber);

  std::vector<const char*> argv;
  argv.push_back("fedminimax");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) {
      const ProblemInstance p = load_problem(config_path, seed);
      write_text(out_path, problem_to_json(p).dump(2) + "\n", out);
      return 0;
    }

    if (*run || *sw) {
      json doc = read_json(config_path);
      const json overrides = apply_overrides(
          doc, out_path.empty() ? std::nullopt : std::optional<std::string>(out_path),
          seed, stride);
      const ExperimentConfig cfg = parse_config(doc, fs::path(config_path).parent_path());
      if (*run && expand_cells(cfg).size() != 1) {
        throw UsageError("run expects a config with a single cell; use sweep");
      }
      SweepOptions so;
      so.threads = threads;
      so.overrides = overrides;
      if (!overrides.empty()) err << "flag overrides: " << overrides.dump() << "\n";
      const RunManifest m = run_sweep(cfg, so);
      print_manifest_summary(m, out);
      return 0;
    }

    if (*verify) {
      const ProblemInstance p = load_problem(config_path, std::nullopt);
      const std::uint64_t s = seed.value_or(0);
      json report = {{"assumptions", to_json(validate_assumptions(p, samples, s))}};
      const auto checks = oracle_checks(p, s);
      bool ok = true;
      json jc = json::array();
      for (const auto& c : checks) {
        jc.push_back({{"name", c.name}, {"value", c.value}, {"tolerance", c.tolerance},
                      {"passed", c.passed()}});
        ok = ok && c.passed();
      }
      report["oracle_checks"] = jc;
      write_text(out_path, report.dump(2) + "\n", out);
      return ok ? 0 : 2;
    }

    if (*fit) {
      const RunManifest m = load_manifest(manifest_path);
      const AxisFit f = fit_over_axis(m, axis, metric, reducer_from_string(reducer),
                                      burn_in.value_or(m.burn_in_fraction));
      out << "axis " << axis << ", metric " << metric << ", reducer " << reducer << "\n";
      for (std::size_t k = 0; k < f.xs.size(); ++k) {
        out << "  " << f.xs[k] << "  " << f.ys[k]
            << (static_cast<int>(k) < f.dropped ? "  (burn-in)" : "") << "\n";
      }
      out << "slope " << f.fit.slope << "\nintercept " << f.fit.intercept << "\nr_squared "
          << f.fit.r_squared << "\n";
      return 0;
    }

    if (*acc) {
      if (list) {
        for (const auto& id : acceptance_ids()) out << id << "\n";
        return 0;
      }
      if (suite.empty()) throw UsageError("accept needs a suite id, 'all' or --list");
      AcceptanceOptions opts;
      opts.threads = threads;
      if (!out_path.empty()) opts.work_dir = out_path;
      std::vector<std::string> ids =
          suite == "all" ? acceptance_ids() : std::vector<std::string>{suite};
      bool ok = true;
      for (const auto& id : ids) {
        const AcceptanceReport r = acceptance_suite(id, opts);
        out << format_report_line(r) << "\n";
        ok = ok && r.passed;
      }
      return ok ? 0 : 2;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace fedminimax
