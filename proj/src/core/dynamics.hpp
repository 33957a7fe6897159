#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "core/error.hpp"

namespace ftc {

using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Quat = Eigen::Quaterniond;

// Physical parameters of one craft. All evaluation-time values come from the
// run configuration; the defaults describe a 250-class research quadrotor.
struct QuadrotorParams {
  double mass = 0.8;                       // kg
  Vec3 inertia_diag{5e-3, 5e-3, 9e-3};     // kg m^2
  double arm_length = 0.17;                // m, center to motor
  double thrust_coeff = 3.25e-6;           // N / (rad/s)^2
  double torque_coeff = 7.5e-8;            // N m / (rad/s)^2
  double motor_time_const = 0.05;          // s
  double max_rotor_speed = 1200.0;         // rad/s
  double gravity = 9.81;                   // m/s^2

  void validate() const;
};

// World frame: z up. Body frame: x forward, y right, z up; the motor layout
// and torque sign conventions are fixed by the mixer below.
struct RigidBodyState {
  Vec3 position = Vec3::Zero();      // m, world
  Vec3 velocity = Vec3::Zero();      // m/s, world
  Quat attitude = Quat::Identity();  // body -> world
  Vec3 body_rates = Vec3::Zero();    // rad/s, body
  Vec4 rotor_speeds = Vec4::Zero();  // rad/s

  bool finite() const;
};

// Per-motor loss of effectiveness. Before onset_time every motor runs at
// full effectiveness; from onset_time on (inclusive) motor i runs at eta[i].
struct MotorFault {
  Vec4 eta = Vec4::Ones();
  double onset_time = 0.0;

  static MotorFault none() { return MotorFault{}; }
};

// Normalized motor commands; mapped affinely to target rotor speed.
struct MotorCommand {
  Vec4 u = Vec4::Zero();

  MotorCommand clamped() const {
    MotorCommand c;
    c.u = u.cwiseMax(0.0).cwiseMin(1.0);
    return c;
  }
};

struct BodyWrench {
  double collective = 0.0;     // N, along body z
  Vec3 torque = Vec3::Zero();  // N m, body frame
};

struct StateDerivative {
  Vec3 position_dot = Vec3::Zero();
  Vec3 velocity_dot = Vec3::Zero();
  Vec4 attitude_dot = Vec4::Zero();  // (w, x, y, z) components of q_dot
  Vec3 body_rates_dot = Vec3::Zero();
  Vec4 rotor_speeds_dot = Vec4::Zero();
};

// Motor layout (X configuration, lever arm d = arm_length / sqrt(2)):
//   motor 0: front-right, CCW     motor 1: back-left, CCW
//   motor 2: front-left,  CW      motor 3: back-right, CW
// Mixer rows (collective, roll, pitch, yaw) over per-motor thrusts F and
// drag torques D:
//   collective =  F0 + F1 + F2 + F3
//   tau_x      =  d * (-F0 + F1 + F2 - F3)
//   tau_y      =  d * ( F0 - F1 + F2 - F3)
//   tau_z      =       -D0 - D1 + D2 + D3
inline constexpr double kMixRoll[4] = {-1.0, 1.0, 1.0, -1.0};
inline constexpr double kMixPitch[4] = {1.0, -1.0, 1.0, -1.0};
inline constexpr double kMixYaw[4] = {-1.0, -1.0, 1.0, 1.0};

// Effectiveness actually applied at time t. Total function; the onset
// boundary is inclusive.
Vec4 fault_at(const MotorFault& fault, double t);

// Quadratic rotor model scaled by effectiveness:
//   F_i = eta_i * k_f * w_i^2,  D_i = eta_i * k_m * w_i^2.
void rotor_forces(const Vec4& rotor_speeds, const Vec4& effectiveness,
                  const QuadrotorParams& params, Vec4& thrusts, Vec4& drag_torques);

BodyWrench mixer_wrench(const Vec4& thrusts, const Vec4& drag_torques,
                        const QuadrotorParams& params);

// Newton-Euler rigid body equations plus a first-order rotor-speed lag toward
// command * max_rotor_speed.
StateDerivative state_derivative(const RigidBodyState& state, const BodyWrench& wrench,
                                 const MotorCommand& command, const QuadrotorParams& params);

// One classical RK4 step of the faulted closed-loop plant under a constant
// command. The quaternion is renormalized and rotor speeds are clamped to
// their physical range after the step. Throws NonFiniteState if any output
// component is non-finite.
RigidBodyState step_rk4(const RigidBodyState& state, const MotorCommand& command,
                        const MotorFault& fault, const QuadrotorParams& params, double t,
                        double dt);

}  // namespace ftc
