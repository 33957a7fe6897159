#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "core/control.hpp"

namespace ftc {

struct SuccessCriteria {
  double final_window_s = 2.0;
  double mean_error_threshold_m = 0.25;

  void validate() const;
};

struct Scenario {
  EnvConfig env;
  std::optional<TaskSample> task;  // explicit task; otherwise drawn from the seed
  ControllerMode mode = ControllerMode::PidBaseline;
  std::string label = "in_distribution";
};

struct EpisodeMetrics {
  bool success = false;
  bool crashed = false;
  EpisodeStatus::Cause crash_cause = EpisodeStatus::Cause::None;
  double rmse_post_onset = std::numeric_limits<double>::quiet_NaN();
  double mean_pos_error = std::numeric_limits<double>::quiet_NaN();
  double final_window_mean_error = std::numeric_limits<double>::quiet_NaN();
  double onset_time = 0.0;
  int steps = 0;
  std::string log_path;
};

// sqrt(mean squared distance) between paired position sequences
double rmse(const std::vector<Vec3>& positions, const std::vector<Vec3>& reference);

// success = no crash AND mean position error over the final window < threshold
bool success(const std::vector<double>& times, const std::vector<double>& errors,
             double episode_length_s, bool crashed, const SuccessCriteria& criteria);

// Closed-loop episode. `artifacts` may be null for the PID baseline. When
// log_path is non-empty a JSONL trajectory log (header + one row per control
// step) is written; the header carries everything replay needs.
EpisodeMetrics run_episode(const Scenario& scenario, const HybridArtifacts* artifacts,
                           const PidGains& gains, uint64_t seed,
                           const SuccessCriteria& criteria, const std::string& log_path);

// re-simulates a trajectory log from its logged actions and compares states
struct ReplayResult {
  int rows = 0;
  double max_deviation = 0.0;
  bool ok = false;
};
ReplayResult replay_log(const std::string& jsonl_path);

// checkpoint bundle resolved per controller mode
struct ArtifactSet {
  const HybridArtifacts* phase1 = nullptr;
  const HybridArtifacts* transformer = nullptr;
  const HybridArtifacts* cnn = nullptr;

  const HybridArtifacts* for_mode(ControllerMode m) const;
};

struct SweepCell {
  std::string id;
  EnvConfig env;
  std::string params;  // "key=value;key=value" echo of the grid point
};

struct SweepRow {
  std::string cell_id;
  std::string mode;
  std::string params;
  int episodes = 0;
  double success_rate = 0.0;
  double rmse_mean_success = std::numeric_limits<double>::quiet_NaN();
  double rmse_std_success = std::numeric_limits<double>::quiet_NaN();
  int crash_tilt = 0;
  int crash_oob = 0;
  int crash_nonfinite = 0;
  double rmse_mean_all = std::numeric_limits<double>::quiet_NaN();
  double rmse_std_all = std::numeric_limits<double>::quiet_NaN();
};

// Runs episodes_per_cell episodes for every (cell, mode) pair. Episode seeds
// derive from (master_seed, cell index, episode index) only, so the same
// tasks are replayed under every mode. Rows land in grid order; the CSV is
// written when csv_path is non-empty, episode logs when log_dir is.
std::vector<SweepRow> sweep(const std::vector<SweepCell>& cells,
                            const std::vector<ControllerMode>& modes, int episodes_per_cell,
                            uint64_t master_seed, const SuccessCriteria& criteria,
                            const PidGains& gains, const ArtifactSet& artifacts,
                            const std::string& csv_path, const std::string& log_dir,
                            int threads);

// per-episode seed used by sweep (exposed for tests)
uint64_t sweep_episode_seed(uint64_t master_seed, int cell_index, int episode_index);

}  // namespace ftc
