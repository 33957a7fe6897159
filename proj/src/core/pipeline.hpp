#pragma once

#include <string>
#include <vector>

#include "core/config.hpp"
#include "core/runio.hpp"

namespace ftc {

// Orchestration behind the public API: one function per subcommand. Every
// entry point validates its config, runs, and leaves a run manifest next to
// its outputs.

Phase1Result pipeline_train_phase1(const RunConfig& cfg, const std::string& run_dir,
                                   int threads);

Phase2Result pipeline_train_phase2(const RunConfig& cfg, const std::string& phase1_prefix,
                                   const std::string& run_dir, int threads);

struct EvalSummary {
  std::string mode;
  int episodes = 0;
  double success_rate = 0.0;
  double crash_rate = 0.0;
  double rmse_mean_success = std::numeric_limits<double>::quiet_NaN();
  double rmse_std_success = std::numeric_limits<double>::quiet_NaN();
  double rmse_mean_all = std::numeric_limits<double>::quiet_NaN();
  double rmse_std_all = std::numeric_limits<double>::quiet_NaN();
  std::string csv_path;

  nlohmann::json to_json() const;
};

// cfg.eval.episodes episodes of cfg.env under one controller mode; episode
// seeds derive from cfg.seed. checkpoint_prefix may be empty for pid mode.
EvalSummary pipeline_eval(const RunConfig& cfg, ControllerMode mode,
                          const std::string& checkpoint_prefix, const std::string& run_dir,
                          int threads);

// Grid file: {"cells": [{"id": "...", "env": { env-section overrides }}, ...]}.
// An empty grid path runs the single default cell. Checkpoints are loaded
// per mode from the three optional prefixes.
std::vector<SweepRow> pipeline_sweep(const RunConfig& cfg, const std::string& grid_path,
                                     const std::vector<ControllerMode>& modes,
                                     const std::string& phase1_prefix,
                                     const std::string& transformer_prefix,
                                     const std::string& cnn_prefix, const std::string& run_dir,
                                     int threads);

ReplayResult pipeline_replay(const std::string& log_path);

// FTC_THREADS cap (default: hardware concurrency), then the explicit arg
int resolve_threads(int requested);

}  // namespace ftc
