#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedminimax/algorithms.hpp"
#include "fedminimax/oracles.hpp"
#include "fedminimax/problems.hpp"
#include "fedminimax/schedule.hpp"

namespace fedminimax {

inline constexpr const char* kArtifactVersion = "1.0.0";
inline constexpr const char* kCsvHeader =
    "step,t,grad_phi_sq,moreau_grad_sq,phi_gap,delta_x,delta_y,"
    "comm_rounds_so_far";

struct SweepAxes {
  std::vector<int> n;
  std::vector<int> tau;
  std::vector<std::int64_t> T;
  std::vector<double> sigma;
};

/// Parsed experiment document. `document` keeps the normalized JSON the run
/// is hashed from.
struct ExperimentConfig {
  nlohmann::json document;

  std::optional<GeneratorParams> generator;
  std::optional<std::string> problem_file;

  AlgorithmId algorithm = AlgorithmId::kLocalSgda;
  MomentumSync momentum_sync = MomentumSync::kAverage;
  NoiseMode noise = NoiseMode::kIndependent;

  std::optional<TheoremId> theorem;
  std::optional<double> kappa;  // overrides the instance's kappa for theorem schedules
  StepSchedule step;

  int tau = 1;
  std::optional<int> s_interval;
  std::int64_t T = 1;

  std::vector<std::uint64_t> seeds;
  SweepAxes sweep;
  int metric_stride = 1;
  double burn_in_fraction = 0.25;
  std::string output_dir = "out";
  std::optional<std::vector<double>> x0;
  std::optional<std::vector<double>> y0;

  std::optional<ProblemInstance> loaded_problem;  // from problem_file
};

/// Parses and validates a config document. Relative problem-file paths are
/// resolved against `base_dir`. Throws std::invalid_argument.
ExperimentConfig parse_config(const nlohmann::json& doc,
                              const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// FNV-1a 64 of the key-sorted compact dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& doc);

struct CellAxes {
  int n = 1;
  int tau = 1;
  std::int64_t T = 1;
  double sigma = 0.0;
};

struct SeedSummary {
  std::uint64_t seed = 0;
  std::optional<double> mean_grad_phi_sq;
  std::optional<double> min_grad_phi_sq;
  std::optional<double> mean_moreau_grad_sq;
  std::optional<double> min_moreau_grad_sq;
  std::optional<double> final_grad_phi_sq;
  std::optional<double> final_moreau_grad_sq;
  std::optional<double> final_phi_gap;
  double mean_delta_x = 0.0;
  double mean_delta_y = 0.0;
  std::int64_t comm_rounds = 0;
  std::int64_t output_index = 0;
};

struct CellResult {
  int index = 0;
  CellAxes axes;
  bool skipped = false;
  std::string skip_reason;
  int tau_used = 1;
  std::optional<int> s_interval;
  StepSchedule step;
  std::vector<std::string> warnings;
  std::vector<std::string> csv_files;  // one per seed, relative to output_dir
  std::string summary_file;
};

struct RunManifest {
  std::string config_hash;
  std::string version = kArtifactVersion;
  std::string output_dir;
  std::string algorithm;
  std::vector<std::uint64_t> seeds;
  double burn_in_fraction = 0.25;
  std::vector<CellResult> cells;
  double wall_clock_seconds = 0.0;
  nlohmann::json overrides = nlohmann::json::object();
};

nlohmann::json manifest_to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);
RunManifest load_manifest(const std::filesystem::path& path);

struct SweepOptions {
  int threads = 1;                  // speed only
  nlohmann::json overrides = nlohmann::json::object();  // echoed into the manifest
};

/// Every (cell, seed) run; one trace CSV per (cell, seed), one summary CSV
/// per cell and manifest.json in the output directory. Invalid cells are
/// recorded as skipped.
RunManifest run_sweep(const ExperimentConfig& cfg, const SweepOptions& opts = {});

/// The problem instance and algorithm configuration of one cell and seed.
/// Throws std::invalid_argument if the cell violates a precondition.
struct CellSetup {
  ProblemInstance problem;
  AlgorithmConfig config;
  std::vector<std::string> warnings;
};
CellSetup prepare_cell(const ExperimentConfig& cfg, const CellAxes& axes,
                       std::uint64_t seed);
std::vector<CellAxes> expand_cells(const ExperimentConfig& cfg);

/// Per-seed summary of a trace.
SeedSummary summarize(const Trace& trace);

/// Trace rows in the fixed CSV schema. Missing values are empty fields.
std::string trace_to_csv(const Trace& trace);

enum class Reducer { kMean, kMinOverT, kFinal };
Reducer reducer_from_string(const std::string& s);
const char* to_string(Reducer r);

struct AggregateRow {
  int cell = 0;
  CellAxes axes;
  double mean = 0.0;
  double std_error = 0.0;
  int seeds = 0;
};

/// Seed-mean and standard error of a per-seed reduction of one CSV column.
/// Skipped cells are omitted. Throws std::invalid_argument for an unknown
/// metric or a column with no values.
std::vector<AggregateRow> aggregate(const RunManifest& manifest,
                                    const std::string& metric, Reducer reducer);

/// Value of a named axis ("n", "tau", "T", "sigma") in a cell.
double axis_value(const CellAxes& axes, const std::string& axis);

struct AxisFit {
  RateFit fit;
  std::vector<double> xs;  // all grid points, ascending
  std::vector<double> ys;
  int dropped = 0;         // leading grid points excluded as burn-in
};

/// Log-log fit of the aggregated metric against one axis. The first
/// floor(burn_in * k) of the k grid points are dropped (at least 3 are
/// kept). Throws std::invalid_argument if the axis values repeat.
AxisFit fit_over_axis(const RunManifest& manifest, const std::string& axis,
                      const std::string& metric, Reducer reducer,
                      double burn_in);

}  // namespace fedminimax
