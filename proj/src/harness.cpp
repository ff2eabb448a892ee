#include "fedminimax/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace fedminimax {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> known,
                    const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument(where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find_if(known.begin(), known.end(),
                     [&](const char* k) { return key == k; }) == known.end()) {
      throw std::invalid_argument("unknown field in " + where + ": " + key);
    }
  }
}

template <typename T>
std::vector<T> nonempty_list(const json& j, const std::string& name) {
  auto v = j.get<std::vector<T>>();
  if (v.empty()) throw std::invalid_argument("sweep axis " + name + " is empty");
  return v;
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_opt(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string cell_name(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "cell%04d", index);
  return buf;
}

}  // namespace

ExperimentConfig parse_config(const json& doc, const fs::path& base_dir) {
  reject_unknown(doc,
                 {"problem", "algorithm", "momentum_sync", "noise", "schedule",
                  "sync", "seeds", "sweep", "metric_stride", "burn_in_fraction",
                  "output_dir", "x0", "y0"},
                 "config");
  ExperimentConfig cfg;
  cfg.document = doc;

  const json& prob = doc.at("problem");
  reject_unknown(prob, {"generator", "file"}, "problem");
  if (prob.contains("generator") == prob.contains("file")) {
    throw std::invalid_argument("problem needs exactly one of generator or file");
  }
  if (prob.contains("generator")) {
    cfg.generator = generator_from_json(prob.at("generator"));
  } else {
    fs::path file = prob.at("file").get<std::string>();
    if (file.is_relative() && !base_dir.empty()) file = base_dir / file;
    std::ifstream in(file);
    if (!in) throw std::invalid_argument("cannot read problem file: " + file.string());
    cfg.problem_file = file.string();
    cfg.loaded_problem = problem_from_json(json::parse(in));
  }

  cfg.algorithm = algorithm_from_string(doc.value("algorithm", "local_sgda"));
  cfg.momentum_sync = momentum_sync_from_string(doc.value("momentum_sync", "average"));
  cfg.noise = noise_mode_from_string(doc.value("noise", "independent"));

  if (doc.contains("schedule")) {
    const json& s = doc.at("schedule");
    reject_unknown(s, {"theorem", "kappa", "eta_x", "eta_y", "alpha", "beta_x", "beta_y"},
                   "schedule");
    if (s.contains("theorem")) {
      cfg.theorem = theorem_from_string(s.at("theorem").get<std::string>());
      if (s.contains("eta_x") || s.contains("eta_y") || s.contains("alpha") ||
          s.contains("beta_x") || s.contains("beta_y")) {
        throw std::invalid_argument("schedule: theorem and explicit steps are exclusive");
      }
      if (s.contains("kappa")) cfg.kappa = s.at("kappa").get<double>();
    } else {
      if (s.contains("kappa")) {
        throw std::invalid_argument("schedule.kappa only applies to theorem schedules");
      }
      cfg.step.eta_x = s.at("eta_x").get<double>();
      cfg.step.eta_y = s.value("eta_y", 0.0);
      cfg.step.alpha = s.value("alpha", 1.0);
      cfg.step.beta_x = s.value("beta_x", 1.0);
      cfg.step.beta_y = s.value("beta_y", 1.0);
    }
  } else {
    throw std::invalid_argument("config needs a schedule");
  }

  if (doc.contains("sync")) {
    const json& s = doc.at("sync");
    reject_unknown(s, {"tau", "s_interval", "T"}, "sync");
    cfg.tau = s.value("tau", 1);
    if (s.contains("s_interval") && !s.at("s_interval").is_null()) {
      cfg.s_interval = s.at("s_interval").get<int>();
    }
    cfg.T = s.value("T", std::int64_t{1});
  }

  if (!doc.contains("seeds")) throw std::invalid_argument("config needs seeds");
  const json& seeds = doc.at("seeds");
  if (seeds.is_array()) {
    cfg.seeds = seeds.get<std::vector<std::uint64_t>>();
  } else {
    reject_unknown(seeds, {"first", "count"}, "seeds");
    const auto first = seeds.value("first", std::uint64_t{0});
    const auto count = seeds.at("count").get<std::int64_t>();
    if (count < 1) throw std::invalid_argument("seeds.count must be >= 1");
    for (std::int64_t k = 0; k < count; ++k) cfg.seeds.push_back(first + k);
  }
  if (cfg.seeds.empty()) throw std::invalid_argument("seeds must be non-empty");

  if (doc.contains("sweep")) {
    const json& s = doc.at("sweep");
    reject_unknown(s, {"n", "tau", "T", "sigma"}, "sweep");
    if (s.contains("n")) cfg.sweep.n = nonempty_list<int>(s.at("n"), "n");
    if (s.contains("tau")) cfg.sweep.tau = nonempty_list<int>(s.at("tau"), "tau");
    if (s.contains("T")) cfg.sweep.T = nonempty_list<std::int64_t>(s.at("T"), "T");
    if (s.contains("sigma")) cfg.sweep.sigma = nonempty_list<double>(s.at("sigma"), "sigma");
  }

  cfg.metric_stride = doc.value("metric_stride", 1);
  if (cfg.metric_stride < 1) throw std::invalid_argument("metric_stride must be >= 1");
  cfg.burn_in_fraction = doc.value("burn_in_fraction", 0.25);
  if (!(cfg.burn_in_fraction >= 0.0 && cfg.burn_in_fraction < 1.0)) {
    throw std::invalid_argument("burn_in_fraction must lie in [0, 1)");
  }
  cfg.output_dir = doc.value("output_dir", std::string("out"));
  if (doc.contains("x0")) cfg.x0 = doc.at("x0").get<std::vector<double>>();
  if (doc.contains("y0")) cfg.y0 = doc.at("y0").get<std::vector<double>>();
  return cfg;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read config: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument("config is not valid JSON: " + std::string(e.what()));
  }
  return parse_config(doc, path.parent_path());
}

std::string config_hash(const json& doc) {
  const std::string s = doc.dump();
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<CellAxes> expand_cells(const ExperimentConfig& cfg) {
  const int base_n = cfg.generator ? cfg.generator->n : cfg.loaded_problem->n();
  const double base_sigma =
      cfg.generator ? cfg.generator->sigma : cfg.loaded_problem->sigma();
  const std::vector<int> ns = cfg.sweep.n.empty() ? std::vector<int>{base_n} : cfg.sweep.n;
  const std::vector<int> taus =
      cfg.sweep.tau.empty() ? std::vector<int>{cfg.tau} : cfg.sweep.tau;
  const std::vector<std::int64_t> Ts =
      cfg.sweep.T.empty() ? std::vector<std::int64_t>{cfg.T} : cfg.sweep.T;
  const std::vector<double> sigmas =
      cfg.sweep.sigma.empty() ? std::vector<double>{base_sigma} : cfg.sweep.sigma;
  std::vector<CellAxes> cells;
  for (int n : ns)
    for (int tau : taus)
      for (auto T : Ts)
        for (double sigma : sigmas) cells.push_back({n, tau, T, sigma});
  return cells;
}

CellSetup prepare_cell(const ExperimentConfig& cfg, const CellAxes& axes,
                       std::uint64_t seed) {
  CellSetup out;
  if (cfg.generator) {
    GeneratorParams g = *cfg.generator;
    g.n = axes.n;
    g.sigma = axes.sigma;
    out.problem = make_quadratic(g);
  } else {
    const ProblemInstance& src = *cfg.loaded_problem;
    if (axes.n != src.n()) {
      throw std::invalid_argument("the n axis needs a generated problem");
    }
    if (axes.sigma != src.sigma()) {
      if (!(axes.sigma >= 0.0)) throw std::invalid_argument("sigma must be >= 0");
      ProblemInstance p(src.clients(), src.class_tag(), axes.sigma, src.y_constraint(),
                        src.reparam_amplitude(), src.seed());
      p.generator = src.generator;
      out.problem = std::move(p);
    } else {
      out.problem = src;
    }
  }
  const ProblemInstance& p = out.problem;

  AlgorithmConfig& ac = out.config;
  ac.sync.horizon_T = axes.T;
  const bool tau_axis = !cfg.sweep.tau.empty();
  if (cfg.theorem) {
    const double L = lipschitz_constant(p);
    double kappa = cfg.kappa.value_or(0.0);
    if (!cfg.kappa) {
      const auto report = validate_assumptions(p, 1, 0);
      kappa = report.kappa;
      if (!std::isfinite(kappa)) {
        if (*cfg.theorem != TheoremId::kT3) {
          throw std::invalid_argument("theorem schedule needs a finite kappa");
        }
        kappa = 1.0;
      }
    }
    TheoremSchedule ts = schedule_from_theorem(*cfg.theorem, axes.n, axes.T, L, kappa);
    ac.step = ts.step;
    ac.sync = ts.sync;
    out.warnings = ts.warnings;
    if (tau_axis) {
      ac.sync.tau = axes.tau;
      if (*cfg.theorem == TheoremId::kT1 &&
          ac.step.eta_y > 1.0 / (8.0 * L * axes.tau)) {
        throw std::invalid_argument("T1 schedule: eta_y > 1/(8 L_f tau) for this tau");
      }
      if (*cfg.theorem == TheoremId::kT3) {
        const double cap = 1.0 / (8.0 * L * axes.tau);
        ac.step.eta_x = std::min(ac.step.eta_x, cap);
        ac.step.eta_y = std::min(ac.step.eta_y, cap);
        const int s = *ac.sync.s_interval;
        ac.sync.s_interval = ((s + axes.tau - 1) / axes.tau) * axes.tau;
      }
    }
    if (cfg.s_interval) ac.sync.s_interval = cfg.s_interval;
  } else {
    ac.step = cfg.step;
    ac.sync.tau = axes.tau;
    ac.sync.s_interval = cfg.s_interval;
  }
  const bool plus = cfg.algorithm == AlgorithmId::kLocalSgdaPlus ||
                    cfg.algorithm == AlgorithmId::kMomentumLocalSgdaPlus;
  if (plus && !ac.sync.s_interval) ac.sync.s_interval = ac.sync.tau * ac.sync.tau;
  if (!plus) ac.sync.s_interval.reset();
  ac.sync.validate();
  const bool momentum = cfg.algorithm == AlgorithmId::kMomentumLocalSgda ||
                        cfg.algorithm == AlgorithmId::kMomentumLocalSgdaPlus;
  ac.step.validate(momentum);
  if (cfg.algorithm == AlgorithmId::kCentralizedSgda && ac.sync.tau != 1) {
    throw std::invalid_argument("the centralized reference needs tau = 1");
  }

  ac.seed = seed;
  ac.metric_stride = cfg.metric_stride;
  ac.momentum_sync = cfg.momentum_sync;
  ac.noise = cfg.noise;
  if (cfg.x0) {
    if (static_cast<int>(cfg.x0->size()) != p.d1()) {
      throw std::invalid_argument("x0 dimension does not match the problem");
    }
    ac.x0 = Eigen::Map<const Vec>(cfg.x0->data(), p.d1());
  }
  if (cfg.y0) {
    if (static_cast<int>(cfg.y0->size()) != p.d2()) {
      throw std::invalid_argument("y0 dimension does not match the problem");
    }
    ac.y0 = Eigen::Map<const Vec>(cfg.y0->data(), p.d2());
  }
  return out;
}

SeedSummary summarize(const Trace& trace) {
  SeedSummary s;
  s.seed = trace.seed;
  s.comm_rounds = trace.comm_rounds;
  s.output_index = trace.output_index;
  auto fold = [&](auto field, std::optional<double>& mean, std::optional<double>& mn) {
    double sum = 0.0;
    std::int64_t count = 0;
    for (const auto& r : trace.records) {
      const std::optional<double>& v = r.*field;
      if (!v) continue;
      sum += *v;
      ++count;
      mn = mn ? std::min(*mn, *v) : *v;
    }
    if (count) mean = sum / static_cast<double>(count);
  };
  fold(&MetricRecord::grad_phi_sq, s.mean_grad_phi_sq, s.min_grad_phi_sq);
  fold(&MetricRecord::moreau_grad_sq, s.mean_moreau_grad_sq, s.min_moreau_grad_sq);
  if (!trace.records.empty()) {
    const auto& last = trace.records.back();
    s.final_grad_phi_sq = last.grad_phi_sq;
    s.final_moreau_grad_sq = last.moreau_grad_sq;
    s.final_phi_gap = last.phi_gap;
    double dx = 0.0, dy = 0.0;
    for (const auto& r : trace.records) {
      dx += r.sync_err_x;
      dy += r.sync_err_y;
    }
    s.mean_delta_x = dx / static_cast<double>(trace.records.size());
    s.mean_delta_y = dy / static_cast<double>(trace.records.size());
  }
  return s;
}

std::string trace_to_csv(const Trace& trace) {
  std::string out = kCsvHeader;
  out += '\n';
  for (const auto& r : trace.records) {
    out += std::to_string(r.step);
    out += ',';
    out += std::to_string(r.t);
    out += ',';
    out += format_opt(r.grad_phi_sq);
    out += ',';
    out += format_opt(r.moreau_grad_sq);
    out += ',';
    out += format_opt(r.phi_gap);
    out += ',';
    out += format_double(r.sync_err_x);
    out += ',';
    out += format_double(r.sync_err_y);
    out += ',';
    out += std::to_string(r.comm_rounds);
    out += '\n';
  }
  return out;
}

namespace {

std::string summary_csv(const std::vector<SeedSummary>& rows) {
  std::string out =
      "seed,mean_grad_phi_sq,min_grad_phi_sq,mean_moreau_grad_sq,"
      "min_moreau_grad_sq,final_grad_phi_sq,final_moreau_grad_sq,final_phi_gap,"
      "mean_delta_x,mean_delta_y,comm_rounds,output_index\n";
  for (const auto& s : rows) {
    out += std::to_string(s.seed) + ',' + format_opt(s.mean_grad_phi_sq) + ',' +
           format_opt(s.min_grad_phi_sq) + ',' + format_opt(s.mean_moreau_grad_sq) +
           ',' + format_opt(s.min_moreau_grad_sq) + ',' +
           format_opt(s.final_grad_phi_sq) + ',' +
           format_opt(s.final_moreau_grad_sq) + ',' + format_opt(s.final_phi_gap) +
           ',' + format_double(s.mean_delta_x) + ',' + format_double(s.mean_delta_y) +
           ',' + std::to_string(s.comm_rounds) + ',' +
           std::to_string(s.output_index) + '\n';
  }
  return out;
}

json step_to_json(const StepSchedule& s) {
  return {{"eta_x", s.eta_x}, {"eta_y", s.eta_y}, {"alpha", s.alpha},
          {"beta_x", s.beta_x}, {"beta_y", s.beta_y}};
}

StepSchedule step_from_json(const json& j) {
  StepSchedule s;
  s.eta_x = j.at("eta_x").get<double>();
  s.eta_y = j.at("eta_y").get<double>();
  s.alpha = j.at("alpha").get<double>();
  s.beta_x = j.at("beta_x").get<double>();
  s.beta_y = j.at("beta_y").get<double>();
  return s;
}

}  // namespace

json manifest_to_json(const RunManifest& m) {
  json cells = json::array();
  for (const auto& c : m.cells) {
    json jc = {{"index", c.index},
               {"axes",
                {{"n", c.axes.n}, {"tau", c.axes.tau}, {"T", c.axes.T},
                 {"sigma", c.axes.sigma}}},
               {"skipped", c.skipped}};
    if (c.skipped) {
      jc["skip_reason"] = c.skip_reason;
    } else {
      jc["tau_used"] = c.tau_used;
      jc["s_interval"] = c.s_interval ? json(*c.s_interval) : json(nullptr);
      jc["comm_rounds"] = c.axes.T / c.tau_used;
      jc["step"] = step_to_json(c.step);
      jc["csv_files"] = c.csv_files;
      jc["summary_file"] = c.summary_file;
    }
    jc["warnings"] = c.warnings;
    cells.push_back(std::move(jc));
  }
  return {{"format", "fedminimax-manifest"},
          {"version", m.version},
          {"config_hash", m.config_hash},
          {"output_dir", m.output_dir},
          {"algorithm", m.algorithm},
          {"seeds", m.seeds},
          {"burn_in_fraction", m.burn_in_fraction},
          {"wall_clock_seconds", m.wall_clock_seconds},
          {"overrides", m.overrides},
          {"cells", cells}};
}

RunManifest manifest_from_json(const json& j) {
  if (j.value("format", std::string()) != "fedminimax-manifest") {
    throw std::invalid_argument("not a fedminimax manifest");
  }
  RunManifest m;
  m.version = j.at("version").get<std::string>();
  m.config_hash = j.at("config_hash").get<std::string>();
  m.output_dir = j.at("output_dir").get<std::string>();
  m.algorithm = j.at("algorithm").get<std::string>();
  m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  m.burn_in_fraction = j.value("burn_in_fraction", 0.25);
  m.wall_clock_seconds = j.value("wall_clock_seconds", 0.0);
  m.overrides = j.value("overrides", json::object());
  for (const auto& jc : j.at("cells")) {
    CellResult c;
    c.index = jc.at("index").get<int>();
    const auto& a = jc.at("axes");
    c.axes = {a.at("n").get<int>(), a.at("tau").get<int>(),
              a.at("T").get<std::int64_t>(), a.at("sigma").get<double>()};
    c.skipped = jc.at("skipped").get<bool>();
    if (c.skipped) {
      c.skip_reason = jc.value("skip_reason", std::string());
    } else {
      c.tau_used = jc.at("tau_used").get<int>();
      if (!jc.at("s_interval").is_null()) c.s_interval = jc.at("s_interval").get<int>();
      c.step = step_from_json(jc.at("step"));
      c.csv_files = jc.at("csv_files").get<std::vector<std::string>>();
      c.summary_file = jc.at("summary_file").get<std::string>();
    }
    c.warnings = jc.value("warnings", std::vector<std::string>{});
    m.cells.push_back(std::move(c));
  }
  return m;
}

RunManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read manifest: " + path.string());
  RunManifest m = manifest_from_json(json::parse(in));
  m.output_dir = path.parent_path().empty() ? "." : path.parent_path().string();
  return m;
}

RunManifest run_sweep(const ExperimentConfig& cfg, const SweepOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);

  RunManifest m;
  m.config_hash = config_hash(cfg.document);
  m.output_dir = dir.string();
  m.algorithm = to_string(cfg.algorithm);
  m.seeds = cfg.seeds;
  m.burn_in_fraction = cfg.burn_in_fraction;
  m.overrides = opts.overrides;

  const auto axes = expand_cells(cfg);
  struct Job {
    int cell;
    std::size_t seed_slot;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < axes.size(); ++c) {
    CellResult cr;
    cr.index = static_cast<int>(c);
    cr.axes = axes[c];
    try {
      CellSetup probe = prepare_cell(cfg, axes[c], cfg.seeds.front());
      cr.tau_used = probe.config.sync.tau;
      cr.s_interval = probe.config.sync.s_interval;
      cr.step = probe.config.step;
      cr.warnings = probe.warnings;
      for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
        jobs.push_back({static_cast<int>(c), s});
      }
    } catch (const std::invalid_argument& e) {
      cr.skipped = true;
      cr.skip_reason = e.what();
    } catch (const std::domain_error& e) {
      cr.skipped = true;
      cr.skip_reason = e.what();
    }
    m.cells.push_back(std::move(cr));
  }

  struct JobResult {
    SeedSummary summary;
    std::string file;
    std::string error;
  };
  std::vector<JobResult> results(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= jobs.size()) return;
      const Job& job = jobs[k];
      const std::uint64_t seed = cfg.seeds[job.seed_slot];
      JobResult& r = results[k];
      try {
        CellSetup setup = prepare_cell(cfg, axes[job.cell], seed);
        const Trace tr = run_algorithm(cfg.algorithm, setup.problem, setup.config);
        r.file = cell_name(job.cell) + "_seed" + std::to_string(seed) + ".csv";
        write_file(dir / r.file, trace_to_csv(tr));
        r.summary = summarize(tr);
      } catch (const std::exception& e) {
        r.error = "seed " + std::to_string(seed) + ": " + e.what();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(opts.threads, static_cast<int>(jobs.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  std::size_t k = 0;
  for (auto& cell : m.cells) {
    if (cell.skipped) continue;
    std::vector<SeedSummary> rows;
    std::string error;
    std::vector<std::string> files;
    for (std::size_t s = 0; s < cfg.seeds.size(); ++s, ++k) {
      if (!results[k].error.empty() && error.empty()) error = results[k].error;
      if (!results[k].file.empty()) files.push_back(results[k].file);
      rows.push_back(results[k].summary);
    }
    if (!error.empty()) {
      for (const auto& f : files) fs::remove(dir / f);
      cell.skipped = true;
      cell.skip_reason = error;
      continue;
    }
    cell.csv_files = files;
    cell.summary_file = cell_name(cell.index) + "_summary.csv";
    write_file(dir / cell.summary_file, summary_csv(rows));
  }

  m.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_file(dir / "manifest.json", manifest_to_json(m).dump(2) + "\n");
  return m;
}

Reducer reducer_from_string(const std::string& s) {
  if (s == "mean") return Reducer::kMean;
  if (s == "min_over_t") return Reducer::kMinOverT;
  if (s == "final") return Reducer::kFinal;
  throw std::invalid_argument("unknown reducer: " + s);
}

const char* to_string(Reducer r) {
  switch (r) {
    case Reducer::kMean: return "mean";
    case Reducer::kMinOverT: return "min_over_t";
    case Reducer::kFinal: return "final";
  }
  return "?";
}

namespace {

int metric_column(const std::string& metric) {
  static const std::vector<std::string> cols = {
      "step", "t", "grad_phi_sq", "moreau_grad_sq", "phi_gap",
      "delta_x", "delta_y", "comm_rounds_so_far"};
  for (std::size_t i = 2; i < cols.size(); ++i) {
    if (cols[i] == metric) return static_cast<int>(i);
  }
  throw std::invalid_argument("unknown metric: " + metric);
}

double reduce_file(const fs::path& path, int column, Reducer reducer,
                   const std::string& metric) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read trace: " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != kCsvHeader) throw std::runtime_error("unexpected CSV header in " + path.string());
  double sum = 0.0, mn = std::numeric_limits<double>::infinity();
  std::optional<double> last;
  std::int64_t count = 0;
  while (std::getline(in, line)) {
    std::size_t pos = 0;
    for (int c = 0; c < column; ++c) pos = line.find(',', pos) + 1;
    const std::size_t end = line.find(',', pos);
    const std::string field = line.substr(pos, end == std::string::npos ? end : end - pos);
    if (field.empty()) {
      last.reset();
      continue;
    }
    double v = 0.0;
    const auto res = std::from_chars(field.data(), field.data() + field.size(), v);
    if (res.ec != std::errc()) throw std::runtime_error("bad number in " + path.string());
    sum += v;
    mn = std::min(mn, v);
    last = v;
    ++count;
  }
  if (count == 0) {
    throw std::invalid_argument("metric " + metric + " has no values in " + path.string());
  }
  switch (reducer) {
    case Reducer::kMean: return sum / static_cast<double>(count);
    case Reducer::kMinOverT: return mn;
    case Reducer::kFinal:
      if (!last) throw std::invalid_argument("metric " + metric + " missing at the final row");
      return *last;
  }
  return 0.0;
}

}  // namespace

std::vector<AggregateRow> aggregate(const RunManifest& manifest,
                                    const std::string& metric, Reducer reducer) {
  const int column = metric_column(metric);
  std::vector<AggregateRow> rows;
  for (const auto& cell : manifest.cells) {
    if (cell.skipped) continue;
    std::vector<double> vals;
    for (const auto& f : cell.csv_files) {
      vals.push_back(reduce_file(fs::path(manifest.output_dir) / f, column, reducer, metric));
    }
    AggregateRow row;
    row.cell = cell.index;
    row.axes = cell.axes;
    row.seeds = static_cast<int>(vals.size());
    if (vals.empty()) continue;
    double sum = 0.0;
    for (double v : vals) sum += v;
    row.mean = sum / static_cast<double>(vals.size());
    if (vals.size() > 1) {
      double ss = 0.0;
      for (double v : vals) ss += (v - row.mean) * (v - row.mean);
      const double var = ss / static_cast<double>(vals.size() - 1);
      row.std_error = std::sqrt(var / static_cast<double>(vals.size()));
    }
    rows.push_back(row);
  }
  return rows;
}

double axis_value(const CellAxes& axes, const std::string& axis) {
  if (axis == "n") return axes.n;
  if (axis == "tau") return axes.tau;
  if (axis == "T") return static_cast<double>(axes.T);
  if (axis == "sigma") return axes.sigma;
  throw std::invalid_argument("unknown axis: " + axis);
}

AxisFit fit_over_axis(const RunManifest& manifest, const std::string& axis,
                      const std::string& metric, Reducer reducer, double burn_in) {
  if (!(burn_in >= 0.0 && burn_in < 1.0)) {
    throw std::invalid_argument("burn-in fraction must lie in [0, 1)");
  }
  auto rows = aggregate(manifest, metric, reducer);
  std::vector<std::pair<double, double>> pts;
  for (const auto& r : rows) pts.emplace_back(axis_value(r.axes, axis), r.mean);
  std::sort(pts.begin(), pts.end());
  for (std::size_t i = 1; i < pts.size(); ++i) {
    if (pts[i].first == pts[i - 1].first) {
      throw std::invalid_argument("axis " + axis + " repeats across cells");
    }
  }
  AxisFit out;
  for (const auto& [x, y] : pts) {
    out.xs.push_back(x);
    out.ys.push_back(y);
  }
  const int k = static_cast<int>(pts.size());
  out.dropped = std::min(static_cast<int>(std::floor(burn_in * k)), std::max(0, k - 3));
  out.fit = fit_rate(std::vector<double>(out.xs.begin() + out.dropped, out.xs.end()),
                     std::vector<double>(out.ys.begin() + out.dropped, out.ys.end()));
  return out;
}

}  // namespace fedminimax
