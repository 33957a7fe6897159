#include <cmath>

#include "core/control.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace ftc;

TEST_CASE("position loop: 1 m offset with pure P maps to 8.475 N collective") {
  PidGains gains;
  gains.kp_pos = Vec3(4.0, 4.0, 4.0);
  gains.kd_pos = Vec3::Zero();
  gains.ki_pos = Vec3::Zero();
  QuadrotorParams nominal;  // mass 0.8, g 9.81
  RigidBodyState state;     // at origin, at rest
  PidState pid;
  double collective = 0.0;
  Quat att;
  pid_position(state, Vec3(1.0, 0.0, 0.0), gains, nominal, 0.01, pid, collective, att);
  // a_des = (4, 0, 9.81), collective = m * |a_des|
  const double expect = 0.8 * std::sqrt(16.0 + 9.81 * 9.81);
  CHECK(collective == doctest::Approx(expect).epsilon(1e-6));
  CHECK(expect == doctest::Approx(8.4753).epsilon(1e-4));
  // desired body z tilts toward +x
  const Vec3 zb = att * Vec3::UnitZ();
  CHECK(zb.x() > 0.3);
  CHECK(zb.z() > 0.9);
  CHECK(std::abs(zb.y()) < 1e-12);
}

TEST_CASE("position loop: at the target it requests gravity compensation upright") {
  PidGains gains;
  gains.ki_pos = Vec3::Zero();
  QuadrotorParams nominal;
  RigidBodyState state;
  state.position = Vec3(0.0, 0.0, 1.5);
  PidState pid;
  double collective = 0.0;
  Quat att;
  pid_position(state, state.position, gains, nominal, 0.01, pid, collective, att);
  CHECK(collective == doctest::Approx(nominal.mass * nominal.gravity).epsilon(1e-9));
  CHECK(att.angularDistance(Quat::Identity()) < 1e-12);
}

TEST_CASE("position loop: integral winds up only to its clamp") {
  PidGains gains;
  QuadrotorParams nominal;
  RigidBodyState state;
  PidState pid;
  double collective = 0.0;
  Quat att;
  // constant 2 m error for a long time: integral clamps at integral_limit
  for (int i = 0; i < 5000; ++i)
    pid_position(state, Vec3(0.0, 2.0, 0.0), gains, nominal, 0.01, pid, collective, att);
  CHECK(pid.integral.y() == doctest::Approx(gains.integral_limit).epsilon(1e-12));
  CHECK(pid.integral.x() == 0.0);
}

TEST_CASE("attitude loop: hover command splits the collective evenly") {
  PidGains gains;
  QuadrotorParams nominal;
  RigidBodyState state;
  const double collective = nominal.mass * nominal.gravity;
  const MotorCommand cmd = pid_attitude(state, Quat::Identity(), collective, gains, nominal);
  const double w_hover = std::sqrt(collective / 4.0 / nominal.thrust_coeff);
  const double expect_u = w_hover / nominal.max_rotor_speed;
  for (int i = 0; i < 4; ++i) CHECK(cmd.u[i] == doctest::Approx(expect_u).epsilon(1e-9));
}

TEST_CASE("attitude loop: roll request raises the +roll motors") {
  PidGains gains;
  QuadrotorParams nominal;
  RigidBodyState state;
  const Quat desired(Eigen::AngleAxisd(0.15, Vec3::UnitX()));
  const MotorCommand cmd =
      pid_attitude(state, desired, nominal.mass * nominal.gravity, gains, nominal);
  // positive roll torque: motors with kMixRoll = +1 spin up (1 and 2)
  CHECK(cmd.u[1] > cmd.u[0]);
  CHECK(cmd.u[2] > cmd.u[3]);
  CHECK(cmd.u[1] == doctest::Approx(cmd.u[2]).epsilon(1e-9));
  CHECK(cmd.u[0] == doctest::Approx(cmd.u[3]).epsilon(1e-9));
}

TEST_CASE("attitude loop: yaw request works through drag torque signs") {
  PidGains gains;
  QuadrotorParams nominal;
  RigidBodyState state;
  const Quat desired(Eigen::AngleAxisd(0.3, Vec3::UnitZ()));
  const MotorCommand cmd =
      pid_attitude(state, desired, nominal.mass * nominal.gravity, gains, nominal);
  // positive yaw torque comes from the kMixYaw = +1 motors (2 and 3)
  CHECK(cmd.u[2] > cmd.u[0]);
  CHECK(cmd.u[3] > cmd.u[1]);
}

TEST_CASE("attitude loop: commands saturate inside [0, 1]") {
  PidGains gains;
  QuadrotorParams nominal;
  RigidBodyState state;
  state.body_rates = Vec3(40.0, -40.0, 10.0);
  const Quat desired(Eigen::AngleAxisd(3.0, Vec3(1, 1, 0).normalized()));
  const MotorCommand cmd = pid_attitude(state, desired, 200.0, gains, nominal);
  for (int i = 0; i < 4; ++i) {
    CHECK(cmd.u[i] >= 0.0);
    CHECK(cmd.u[i] <= 1.0);
  }
}

TEST_CASE("controller modes map to names and back") {
  const ControllerMode modes[] = {ControllerMode::PidBaseline, ControllerMode::HybridTransformer,
                                  ControllerMode::HybridCnn, ControllerMode::HybridPrivileged,
                                  ControllerMode::HybridZeroLatent};
  for (ControllerMode m : modes) {
    const auto back = mode_from_name(mode_name(m));
    REQUIRE(back.has_value());
    CHECK(*back == m);
  }
  CHECK(!mode_from_name("nonsense").has_value());
}

TEST_CASE("pid controller: flies to a fixed hover target from a 0.5 m spawn") {
  EnvConfig cfg;
  cfg.mass_range = {cfg.nominal.mass, cfg.nominal.mass};
  cfg.arm_length_range = {cfg.nominal.arm_length, cfg.nominal.arm_length};
  cfg.k_f_range = {cfg.nominal.thrust_coeff, cfg.nominal.thrust_coeff};
  cfg.inertia_xx_range = {cfg.nominal.inertia_diag.x(), cfg.nominal.inertia_diag.x()};
  cfg.inertia_yy_range = {cfg.nominal.inertia_diag.y(), cfg.nominal.inertia_diag.y()};
  cfg.inertia_zz_range = {cfg.nominal.inertia_diag.z(), cfg.nominal.inertia_diag.z()};
  cfg.motor_time_const_range = {cfg.nominal.motor_time_const, cfg.nominal.motor_time_const};
  cfg.eta_range = {1.0, 1.0};  // healthy craft
  cfg.episode_length_s = 5.0;

  Env env(cfg, 321);
  env.reset();
  PidGains gains;
  Controller ctl(ControllerMode::PidBaseline, gains, nullptr);
  while (env.current_status().running()) {
    const MotorCommand cmd = ctl.step(env);
    env.step(cmd);
  }
  CHECK(env.current_status().kind == EpisodeStatus::Kind::TimeLimit);
  CHECK((env.state().position - cfg.hover_position).norm() < 0.1);
  CHECK(env.state().velocity.norm() < 0.1);
}

TEST_CASE("pid controller: deterministic across two identical episodes") {
  EnvConfig cfg;
  cfg.episode_length_s = 2.0;
  const TaskSample task = sample_task(99, cfg);
  PidGains gains;

  auto run = [&](std::vector<double>& tail) {
    Env env(cfg, 0);
    env.reset_with(task, 1001);
    Controller ctl(ControllerMode::PidBaseline, gains, nullptr);
    while (env.current_status().running()) {
      env.step(ctl.step(env));
      tail.push_back(env.state().position.x());
    }
  };
  std::vector<double> a, b;
  run(a);
  run(b);
  CHECK(a == b);
}
