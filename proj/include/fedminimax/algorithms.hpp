#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedminimax/metrics.hpp"
#include "fedminimax/problems.hpp"
#include "fedminimax/schedule.hpp"

namespace fedminimax {

enum class AlgorithmId {
  kLocalSgda,
  kMomentumLocalSgda,
  kLocalSgdaPlus,
  kMomentumLocalSgdaPlus,
  kLocalSgd,
  kCentralizedSgda,
};

/// What happens to momentum directions at a model-averaging event.
enum class MomentumSync { kAverage, kReset, kKeep };

const char* to_string(AlgorithmId id);
AlgorithmId algorithm_from_string(const std::string& s);
const char* to_string(MomentumSync m);
MomentumSync momentum_sync_from_string(const std::string& s);
const char* to_string(NoiseMode m);
NoiseMode noise_mode_from_string(const std::string& s);

enum class GradBlock { kX, kY };

/// One stochastic-gradient evaluation, reported to instrumentation hooks.
struct GradCall {
  std::int64_t t;
  int client;
  GradBlock block;
  const Vec& x_arg;
  const Vec& y_arg;
  const Vec& value;
};

struct ClientState {
  Vec x;
  Vec y;
  Vec dx;  // momentum directions (empty for plain SGDA)
  Vec dy;
  NoiseStreams streams;
};

struct ServerState {
  Vec x_bar;
  Vec y_bar;
  Vec x_snapshot;
  std::int64_t round_count = 0;
  std::int64_t snapshot_count = 0;
};

enum class StatePhase { kAfterLocalUpdate, kAfterSync };

struct Instrumentation {
  std::function<void(const GradCall&)> on_grad;
  std::function<void(StatePhase, std::int64_t t, std::span<const ClientState>)>
      on_state;
};

struct AlgorithmConfig {
  StepSchedule step;
  SyncSchedule sync;
  std::uint64_t seed = 0;
  Vec x0;  // empty -> zeros
  Vec y0;
  int metric_stride = 1;
  MomentumSync momentum_sync = MomentumSync::kAverage;
  NoiseMode noise = NoiseMode::kIndependent;
  bool capture_trajectory = false;
  Instrumentation hooks;
};

struct Trace {
  AlgorithmId algorithm = AlgorithmId::kLocalSgda;
  std::vector<MetricRecord> records;
  std::vector<Vec> traj_x;  // virtual averages at recorded t (if captured)
  std::vector<Vec> traj_y;
  Vec x_final;
  Vec y_final;
  std::int64_t output_index = 0;  // uniformly random t in [1, T]
  Vec x_output;
  std::int64_t comm_rounds = 0;
  std::vector<std::int64_t> snapshot_steps;  // t+1 at each snapshot refresh
  bool projected = false;                    // y projected after each step

  std::uint64_t seed = 0;
  std::int64_t T = 0;
  int tau = 1;
  std::optional<int> s_interval;
  StepSchedule step;
  MomentumSync momentum_sync = MomentumSync::kAverage;
  NoiseMode noise = NoiseMode::kIndependent;
};

/// Mean over clients in ascending index order, computed as v_0 plus the mean
/// offset from v_0, so averaging identical vectors returns them unchanged.
Vec client_mean(std::span<const Vec> values);

/// Model averaging: every client receives the mean (x, y); directions are
/// averaged, zeroed or kept according to `directions`.
void sync_models(std::span<ClientState> clients, ServerState& server,
                 MomentumSync directions);

Trace run_local_sgda(const ProblemInstance& p, const AlgorithmConfig& cfg);
Trace run_momentum_local_sgda(const ProblemInstance& p,
                              const AlgorithmConfig& cfg);
Trace run_local_sgda_plus(const ProblemInstance& p, const AlgorithmConfig& cfg);
/// Directions are always reset to zero at model averaging in this variant;
/// cfg.momentum_sync is ignored.
Trace run_momentum_local_sgda_plus(const ProblemInstance& p,
                                   const AlgorithmConfig& cfg);
/// Local SGD on g_i(x) = f_i(x, y0). Requires
/// eta_x <= min(1/(4L), 1/(8L(tau-1))) with L the smoothness of g.
Trace run_local_sgd(const ProblemInstance& p, const AlgorithmConfig& cfg);

/// Dispatch by id (the centralized reference lives in oracles).
Trace run_algorithm(AlgorithmId id, const ProblemInstance& p,
                    const AlgorithmConfig& cfg);

}  // namespace fedminimax
