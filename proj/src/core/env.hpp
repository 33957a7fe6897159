#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "core/dynamics.hpp"
#include "core/rng.hpp"

namespace ftc {

inline constexpr int kObservationDim = 22;
inline constexpr int kActionDim = 4;
inline constexpr int kExtrinsicsDim = 10;

using ObsVec = Eigen::Matrix<double, kObservationDim, 1>;
using ExtVec = Eigen::Matrix<double, kExtrinsicsDim, 1>;

struct Range {
  double lo = 0.0;
  double hi = 0.0;

  bool valid() const { return hi >= lo; }
  bool degenerate() const { return hi == lo; }
  double sample(Rng& rng) const { return degenerate() ? lo : rng.uniform(lo, hi); }
};

enum class TargetMode { Hover, Waypoints };

struct EnvConfig {
  double episode_length_s = 10.0;
  double control_rate_hz = 100.0;
  double physics_dt_s = 0.002;

  QuadrotorParams nominal;

  // randomized physical parameters, sampled uniformly per episode
  Range mass_range{0.56, 1.04};
  Range arm_length_range{0.136, 0.204};
  Range k_f_range{2.6e-6, 3.9e-6};
  Range inertia_xx_range{3.5e-3, 6.5e-3};
  Range inertia_yy_range{3.5e-3, 6.5e-3};
  Range inertia_zz_range{6.3e-3, 11.7e-3};
  Range motor_time_const_range{0.035, 0.065};

  // loss-of-effectiveness fault
  Range eta_range{0.3, 1.0};
  int num_faulted = 1;
  Range onset_range{0.0, 5.0};

  TargetMode target_mode = TargetMode::Hover;
  Vec3 hover_position{0.0, 0.0, 1.5};
  double waypoint_half_side = 0.5;

  // reward weights. w_body_rates must stay small enough that the forced yaw
  // spin of a severe single-motor fault (|omega| ~ 25 rad/s at eta ~ 0.3) still
  // earns positive per-step reward: at 0.05 a stable spin costs more return
  // than an immediate crash, and the optimum is to ditch the vehicle.
  double w_position = 0.5;
  double w_velocity = 0.05;
  double w_body_rates = 0.01;
  double w_action_rate = 0.2;
  double crash_penalty = 10.0;

  // crash thresholds
  double tilt_cos_min = 0.0;
  double position_bound_m = 10.0;

  double spawn_offset_m = 0.5;

  int physics_substeps() const;
  void validate() const;
};

// Privileged environment factors in raw units:
// (eta_0..eta_3, mass, arm_length, k_f, Ixx, Iyy, motor_time_const).
using RawExtrinsics = ExtVec;

// Affine normalization of each extrinsics component to [-1, 1] over its
// randomization range. Degenerate ranges map to 0. The map used by a trained
// policy is frozen into its checkpoint, so evaluation-time range overrides do
// not shift the latent targets.
struct ExtrinsicsNormalizer {
  std::array<Range, kExtrinsicsDim> ranges;

  static ExtrinsicsNormalizer from_config(const EnvConfig& cfg);
  ExtVec normalize(const RawExtrinsics& raw) const;
  RawExtrinsics denormalize(const ExtVec& e) const;
};

struct TaskSample {
  QuadrotorParams params;
  MotorFault fault;
  ExtVec extrinsics;  // normalized, with the fault's terminal effectiveness
};

// Uniform draw of a task from the configured ranges. Deterministic in seed.
TaskSample sample_task(uint64_t seed, const EnvConfig& cfg);

struct EpisodeStatus {
  enum class Kind { Running, Crashed, TimeLimit };
  enum class Cause { None, Tilt, OutOfBounds, NonFinite };

  Kind kind = Kind::Running;
  Cause cause = Cause::None;

  bool running() const { return kind == Kind::Running; }
  bool crashed() const { return kind == Kind::Crashed; }
};

// Observation layout (length 22):
//   [0..2]   target - position, world, clamped to +-5 m
//   [3..5]   velocity, world
//   [6..11]  first two columns of the body->world rotation matrix
//   [12..14] body rates, clamped to +-20 rad/s
//   [15..18] previous action
//   [19..21] unit direction from the active waypoint to the next (zero when
//            there is no next waypoint)
ObsVec observe(const RigidBodyState& state, const Vec3& target, const MotorCommand& prev_action,
               const Vec3& next_waypoint_dir = Vec3::Zero());

double reward(const RigidBodyState& state, const MotorCommand& action,
              const MotorCommand& prev_action, const Vec3& target, const EnvConfig& cfg,
              bool crashed);

EpisodeStatus status(const RigidBodyState& state, double t, const EnvConfig& cfg,
                     const Vec3& target);

// Closed-loop episode runner: owns the task, the rigid body state and the
// control-step bookkeeping. One instance per episode stream; instances are
// independent.
class Env {
 public:
  Env(const EnvConfig& cfg, uint64_t seed);

  // samples a fresh task and initial state from this env's seed stream
  void reset();
  // runs an explicit task; the init seed only drives the spawn offset
  void reset_with(const TaskSample& task, uint64_t init_seed);

  struct StepResult {
    ObsVec observation;
    double reward = 0.0;
    EpisodeStatus status;
  };
  StepResult step(const MotorCommand& action);

  const EnvConfig& config() const { return cfg_; }
  const RigidBodyState& state() const { return state_; }
  const TaskSample& task() const { return task_; }
  const MotorCommand& prev_action() const { return prev_action_; }
  double time() const;
  double control_dt() const { return 1.0 / cfg_.control_rate_hz; }
  int steps_taken() const { return step_count_; }
  EpisodeStatus current_status() const { return status_; }

  Vec3 target() const { return target_at(time()); }
  Vec3 target_at(double t) const;
  Vec3 next_waypoint_dir_at(double t) const;

  ObsVec observation() const;

  // privileged factors with the effectiveness that is active at time t
  RawExtrinsics raw_extrinsics_at(double t) const;
  const ExtrinsicsNormalizer& normalizer() const { return normalizer_; }

 private:
  EnvConfig cfg_;
  ExtrinsicsNormalizer normalizer_;
  uint64_t seed_ = 0;
  uint64_t episode_counter_ = 0;

  TaskSample task_;
  RigidBodyState state_;
  MotorCommand prev_action_;
  EpisodeStatus status_;
  int step_count_ = 0;

  void init_state(uint64_t init_seed);
  std::vector<Vec3> waypoints() const;
};

}  // namespace ftc
