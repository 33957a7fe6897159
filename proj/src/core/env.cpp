#include "core/env.hpp"

#include <cmath>

namespace ftc {

int EnvConfig::physics_substeps() const {
  const double n = 1.0 / (control_rate_hz * physics_dt_s);
  const int ni = static_cast<int>(std::lround(n));
  require(ni >= 1 && std::abs(n - ni) < 1e-9, ErrorCode::InvalidConfig,
          "physics_dt_s must evenly divide the control period");
  return ni;
}

void EnvConfig::validate() const {
  nominal.validate();
  require(episode_length_s > 0, ErrorCode::InvalidConfig, "episode_length_s must be positive");
  require(control_rate_hz > 0, ErrorCode::InvalidConfig, "control_rate_hz must be positive");
  require(physics_dt_s > 0 && physics_dt_s <= 0.02, ErrorCode::InvalidConfig,
          "physics_dt_s must be in (0, 0.02]");
  (void)physics_substeps();

  auto check_range = [](const Range& r, const char* name) {
    require(r.valid(), ErrorCode::InvalidConfig, std::string(name) + " range is empty");
  };
  check_range(mass_range, "mass");
  check_range(arm_length_range, "arm_length");
  check_range(k_f_range, "k_f");
  check_range(inertia_xx_range, "inertia_xx");
  check_range(inertia_yy_range, "inertia_yy");
  check_range(inertia_zz_range, "inertia_zz");
  check_range(motor_time_const_range, "motor_time_const");
  check_range(eta_range, "eta");
  check_range(onset_range, "onset");
  require(mass_range.lo > 0 && arm_length_range.lo > 0 && k_f_range.lo > 0 &&
              inertia_xx_range.lo > 0 && inertia_yy_range.lo > 0 && inertia_zz_range.lo > 0 &&
              motor_time_const_range.lo > 0,
          ErrorCode::InvalidConfig, "physical ranges must be strictly positive");
  require(eta_range.lo >= 0 && eta_range.hi <= 1, ErrorCode::InvalidConfig,
          "eta range must lie in [0, 1]");
  require(num_faulted >= 0 && num_faulted <= 4, ErrorCode::InvalidConfig,
          "num_faulted must be in [0, 4]");
  require(onset_range.lo >= 0, ErrorCode::InvalidConfig, "onset must be non-negative");
  require(w_position >= 0 && w_velocity >= 0 && w_body_rates >= 0 && w_action_rate >= 0 &&
              crash_penalty >= 0,
          ErrorCode::InvalidConfig, "reward weights must be non-negative");
  require(position_bound_m > 0, ErrorCode::InvalidConfig, "position_bound_m must be positive");
  require(spawn_offset_m >= 0, ErrorCode::InvalidConfig, "spawn_offset_m must be non-negative");
}

ExtrinsicsNormalizer ExtrinsicsNormalizer::from_config(const EnvConfig& cfg) {
  ExtrinsicsNormalizer n;
  for (int i = 0; i < 4; ++i) n.ranges[i] = cfg.eta_range;
  n.ranges[4] = cfg.mass_range;
  n.ranges[5] = cfg.arm_length_range;
  n.ranges[6] = cfg.k_f_range;
  n.ranges[7] = cfg.inertia_xx_range;
  n.ranges[8] = cfg.inertia_yy_range;
  n.ranges[9] = cfg.motor_time_const_range;
  return n;
}

ExtVec ExtrinsicsNormalizer::normalize(const RawExtrinsics& raw) const {
  ExtVec e;
  for (int i = 0; i < kExtrinsicsDim; ++i) {
    const Range& r = ranges[i];
    e[i] = r.degenerate() ? 0.0 : 2.0 * (raw[i] - r.lo) / (r.hi - r.lo) - 1.0;
  }
  return e;
}

RawExtrinsics ExtrinsicsNormalizer::denormalize(const ExtVec& e) const {
  RawExtrinsics raw;
  for (int i = 0; i < kExtrinsicsDim; ++i) {
    const Range& r = ranges[i];
    raw[i] = r.degenerate() ? r.lo : r.lo + 0.5 * (e[i] + 1.0) * (r.hi - r.lo);
  }
  return raw;
}

TaskSample sample_task(uint64_t seed, const EnvConfig& cfg) {
  cfg.validate();
  Rng rng(seed);

  TaskSample t;
  t.params = cfg.nominal;
  t.params.mass = cfg.mass_range.sample(rng);
  t.params.arm_length = cfg.arm_length_range.sample(rng);
  t.params.thrust_coeff = cfg.k_f_range.sample(rng);
  t.params.inertia_diag[0] = cfg.inertia_xx_range.sample(rng);
  t.params.inertia_diag[1] = cfg.inertia_yy_range.sample(rng);
  t.params.inertia_diag[2] = cfg.inertia_zz_range.sample(rng);
  t.params.motor_time_const = cfg.motor_time_const_range.sample(rng);
  t.params.validate();

  t.fault = MotorFault::none();
  if (cfg.num_faulted > 0) {
    // distinct motor indices, order fixed by the draw sequence
    std::array<int, 4> order{0, 1, 2, 3};
    for (int i = 0; i < 3; ++i) {
      const int j = i + static_cast<int>(rng.uniform_index(4 - i));
      std::swap(order[i], order[j]);
    }
    for (int k = 0; k < cfg.num_faulted; ++k) t.fault.eta[order[k]] = cfg.eta_range.sample(rng);
    t.fault.onset_time = cfg.onset_range.sample(rng);
  }

  RawExtrinsics raw;
  raw << t.fault.eta[0], t.fault.eta[1], t.fault.eta[2], t.fault.eta[3], t.params.mass,
      t.params.arm_length, t.params.thrust_coeff, t.params.inertia_diag[0],
      t.params.inertia_diag[1], t.params.motor_time_const;
  t.extrinsics = ExtrinsicsNormalizer::from_config(cfg).normalize(raw);
  return t;
}

ObsVec observe(const RigidBodyState& state, const Vec3& target, const MotorCommand& prev_action,
               const Vec3& next_waypoint_dir) {
  ObsVec o;
  const Vec3 perr = (target - state.position).cwiseMax(-5.0).cwiseMin(5.0);
  const Eigen::Matrix3d R = state.attitude.toRotationMatrix();
  const Vec3 rates = state.body_rates.cwiseMax(-20.0).cwiseMin(20.0);
  o.segment<3>(0) = perr;
  o.segment<3>(3) = state.velocity;
  o.segment<3>(6) = R.col(0);
  o.segment<3>(9) = R.col(1);
  o.segment<3>(12) = rates;
  o.segment<4>(15) = prev_action.u;
  o.segment<3>(19) = next_waypoint_dir;
  return o;
}

double reward(const RigidBodyState& state, const MotorCommand& action,
              const MotorCommand& prev_action, const Vec3& target, const EnvConfig& cfg,
              bool crashed) {
  double r = 1.0;
  r -= cfg.w_position * (state.position - target).norm();
  r -= cfg.w_velocity * state.velocity.norm();
  r -= cfg.w_body_rates * state.body_rates.norm();
  r -= cfg.w_action_rate * (action.u - prev_action.u).norm();
  if (crashed) r -= cfg.crash_penalty;
  return r;
}

EpisodeStatus status(const RigidBodyState& state, double t, const EnvConfig& cfg,
                     const Vec3& target) {
  EpisodeStatus s;
  if (!state.finite()) {
    s.kind = EpisodeStatus::Kind::Crashed;
    s.cause = EpisodeStatus::Cause::NonFinite;
    return s;
  }
  // world z component of the rotated body z axis
  const Quat& q = state.attitude;
  const double up_cos = 1.0 - 2.0 * (q.x() * q.x() + q.y() * q.y());
  if (up_cos < cfg.tilt_cos_min) {
    s.kind = EpisodeStatus::Kind::Crashed;
    s.cause = EpisodeStatus::Cause::Tilt;
    return s;
  }
  if ((state.position - target).norm() > cfg.position_bound_m || state.position.z() < 0.0) {
    s.kind = EpisodeStatus::Kind::Crashed;
    s.cause = EpisodeStatus::Cause::OutOfBounds;
    return s;
  }
  if (t >= cfg.episode_length_s) s.kind = EpisodeStatus::Kind::TimeLimit;
  return s;
}

Env::Env(const EnvConfig& cfg, uint64_t seed) : cfg_(cfg), seed_(seed) {
  cfg_.validate();
  normalizer_ = ExtrinsicsNormalizer::from_config(cfg_);
  reset();
}

void Env::reset() {
  const uint64_t task_seed = derive_seed(seed_, {episode_counter_, 0});
  const uint64_t init_seed = derive_seed(seed_, {episode_counter_, 1});
  ++episode_counter_;
  task_ = sample_task(task_seed, cfg_);
  init_state(init_seed);
}

void Env::reset_with(const TaskSample& task, uint64_t init_seed) {
  task_ = task;
  init_state(init_seed);
}

void Env::init_state(uint64_t init_seed) {
  Rng rng(init_seed);
  state_ = RigidBodyState{};
  const Vec3 target0 = target_at(0.0);
  Vec3 offset;
  for (int i = 0; i < 3; ++i) offset[i] = rng.uniform(-cfg_.spawn_offset_m, cfg_.spawn_offset_m);
  state_.position = target0 + offset;
  // spawn in hover equilibrium for the healthy craft
  const double hover_speed =
      std::sqrt(task_.params.mass * task_.params.gravity / (4.0 * task_.params.thrust_coeff));
  state_.rotor_speeds = Vec4::Constant(std::min(hover_speed, task_.params.max_rotor_speed));
  prev_action_ = MotorCommand{};
  status_ = EpisodeStatus{};
  step_count_ = 0;
}

double Env::time() const { return step_count_ / cfg_.control_rate_hz; }

std::vector<Vec3> Env::waypoints() const {
  const double h = cfg_.waypoint_half_side;
  const Vec3 c = cfg_.hover_position;
  return {c + Vec3(h, h, 0), c + Vec3(-h, h, 0), c + Vec3(-h, -h, 0), c + Vec3(h, -h, 0)};
}

Vec3 Env::target_at(double t) const {
  if (cfg_.target_mode == TargetMode::Hover) return cfg_.hover_position;
  const auto wps = waypoints();
  const double dwell = cfg_.episode_length_s / static_cast<double>(wps.size());
  const int idx = std::min(static_cast<int>(t / dwell), static_cast<int>(wps.size()) - 1);
  return wps[idx];
}

Vec3 Env::next_waypoint_dir_at(double t) const {
  if (cfg_.target_mode == TargetMode::Hover) return Vec3::Zero();
  const auto wps = waypoints();
  const double dwell = cfg_.episode_length_s / static_cast<double>(wps.size());
  const int idx = std::min(static_cast<int>(t / dwell), static_cast<int>(wps.size()) - 1);
  if (idx + 1 >= static_cast<int>(wps.size())) return Vec3::Zero();
  const Vec3 d = wps[idx + 1] - wps[idx];
  const double n = d.norm();
  return n > 0 ? Vec3(d / n) : Vec3::Zero();
}

ObsVec Env::observation() const {
  const double t = time();
  return observe(state_, target_at(t), prev_action_, next_waypoint_dir_at(t));
}

RawExtrinsics Env::raw_extrinsics_at(double t) const {
  const Vec4 eta = fault_at(task_.fault, t);
  RawExtrinsics raw;
  raw << eta[0], eta[1], eta[2], eta[3], task_.params.mass, task_.params.arm_length,
      task_.params.thrust_coeff, task_.params.inertia_diag[0], task_.params.inertia_diag[1],
      task_.params.motor_time_const;
  return raw;
}

Env::StepResult Env::step(const MotorCommand& action) {
  require(status_.running(), ErrorCode::Internal, "step called on a finished episode");
  const MotorCommand a = action.clamped();
  const int substeps = cfg_.physics_substeps();
  const double t0 = time();

  // on numerical blow-up state_ keeps the last finite value
  bool nonfinite = false;
  for (int i = 0; i < substeps; ++i) {
    try {
      state_ = step_rk4(state_, a, task_.fault, task_.params, t0 + i * cfg_.physics_dt_s,
                        cfg_.physics_dt_s);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NonFiniteState) throw;
      nonfinite = true;
      break;
    }
  }
  ++step_count_;
  const double t1 = time();
  const Vec3 tgt = target_at(t1);

  if (nonfinite) {
    status_ = EpisodeStatus{EpisodeStatus::Kind::Crashed, EpisodeStatus::Cause::NonFinite};
  } else {
    status_ = status(state_, t1, cfg_, tgt);
  }

  StepResult r;
  r.status = status_;
  r.reward = reward(state_, a, prev_action_, tgt, cfg_, status_.crashed());
  prev_action_ = a;
  r.observation = observation();
  return r;
}

}  // namespace ftc
