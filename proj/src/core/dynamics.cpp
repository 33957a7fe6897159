#include "core/dynamics.hpp"

#include <cmath>

namespace ftc {

void QuadrotorParams::validate() const {
  require(mass > 0, ErrorCode::ValidationError, "mass must be positive");
  require(inertia_diag.minCoeff() > 0, ErrorCode::ValidationError,
          "inertia_diag components must be positive");
  require(arm_length > 0, ErrorCode::ValidationError, "arm_length must be positive");
  require(thrust_coeff > 0, ErrorCode::ValidationError, "thrust_coeff must be positive");
  require(torque_coeff > 0, ErrorCode::ValidationError, "torque_coeff must be positive");
  require(motor_time_const > 0, ErrorCode::ValidationError, "motor_time_const must be positive");
  require(max_rotor_speed > 0, ErrorCode::ValidationError, "max_rotor_speed must be positive");
  require(gravity > 0, ErrorCode::ValidationError, "gravity must be positive");
  require(4.0 * thrust_coeff * max_rotor_speed * max_rotor_speed > mass * gravity,
          ErrorCode::ValidationError, "hover is not achievable: 4*k_f*w_max^2 <= m*g");
}

bool RigidBodyState::finite() const {
  return position.allFinite() && velocity.allFinite() && attitude.coeffs().allFinite() &&
         body_rates.allFinite() && rotor_speeds.allFinite();
}

Vec4 fault_at(const MotorFault& fault, double t) {
  if (t < fault.onset_time) return Vec4::Ones();
  return fault.eta;
}

void rotor_forces(const Vec4& rotor_speeds, const Vec4& effectiveness,
                  const QuadrotorParams& params, Vec4& thrusts, Vec4& drag_torques) {
  const Vec4 w2 = rotor_speeds.cwiseProduct(rotor_speeds);
  thrusts = params.thrust_coeff * effectiveness.cwiseProduct(w2);
  drag_torques = params.torque_coeff * effectiveness.cwiseProduct(w2);
}

BodyWrench mixer_wrench(const Vec4& thrusts, const Vec4& drag_torques,
                        const QuadrotorParams& params) {
  const double d = params.arm_length / std::sqrt(2.0);
  BodyWrench w;
  w.collective = thrusts.sum();
  double tx = 0.0, ty = 0.0, tz = 0.0;
  for (int i = 0; i < 4; ++i) {
    tx += kMixRoll[i] * thrusts[i];
    ty += kMixPitch[i] * thrusts[i];
    tz += kMixYaw[i] * drag_torques[i];
  }
  w.torque = Vec3(d * tx, d * ty, tz);
  return w;
}

StateDerivative state_derivative(const RigidBodyState& state, const BodyWrench& wrench,
                                 const MotorCommand& command, const QuadrotorParams& params) {
  StateDerivative d;
  d.position_dot = state.velocity;

  // translational: gravity plus thrust along rotated body z
  const Vec3 thrust_world = state.attitude * Vec3(0.0, 0.0, wrench.collective);
  d.velocity_dot = Vec3(0.0, 0.0, -params.gravity) + thrust_world / params.mass;

  // q_dot = 1/2 q (0, omega)
  const Quat& q = state.attitude;
  const Vec3& w = state.body_rates;
  d.attitude_dot[0] = 0.5 * (-q.x() * w.x() - q.y() * w.y() - q.z() * w.z());
  d.attitude_dot[1] = 0.5 * (q.w() * w.x() + q.y() * w.z() - q.z() * w.y());
  d.attitude_dot[2] = 0.5 * (q.w() * w.y() + q.z() * w.x() - q.x() * w.z());
  d.attitude_dot[3] = 0.5 * (q.w() * w.z() + q.x() * w.y() - q.y() * w.x());

  // I w_dot = tau - w x (I w)
  const Vec3& I = params.inertia_diag;
  const Vec3 Iw(I.x() * w.x(), I.y() * w.y(), I.z() * w.z());
  const Vec3 tau = wrench.torque - w.cross(Iw);
  d.body_rates_dot = Vec3(tau.x() / I.x(), tau.y() / I.y(), tau.z() / I.z());

  const Vec4 target = command.clamped().u * params.max_rotor_speed;
  d.rotor_speeds_dot = (target - state.rotor_speeds) / params.motor_time_const;
  return d;
}

namespace {

// flat copy of the state for RK4 stage arithmetic; the quaternion is treated
// as a raw 4-vector and renormalized once at the end of the step
struct FlatState {
  Vec3 p, v;
  Vec4 q;  // (w, x, y, z)
  Vec3 w;
  Vec4 rotor;
};

FlatState flatten(const RigidBodyState& s) {
  return {s.position, s.velocity,
          Vec4(s.attitude.w(), s.attitude.x(), s.attitude.y(), s.attitude.z()), s.body_rates,
          s.rotor_speeds};
}

RigidBodyState unflatten(const FlatState& f) {
  RigidBodyState s;
  s.position = f.p;
  s.velocity = f.v;
  s.attitude = Quat(f.q[0], f.q[1], f.q[2], f.q[3]);
  s.body_rates = f.w;
  s.rotor_speeds = f.rotor;
  return s;
}

FlatState axpy(const FlatState& s, double a, const StateDerivative& d) {
  FlatState r;
  r.p = s.p + a * d.position_dot;
  r.v = s.v + a * d.velocity_dot;
  r.q = s.q + a * d.attitude_dot;
  r.w = s.w + a * d.body_rates_dot;
  r.rotor = s.rotor + a * d.rotor_speeds_dot;
  return r;
}

StateDerivative eval_derivative(const FlatState& f, const MotorCommand& command,
                                const MotorFault& fault, const QuadrotorParams& params,
                                double t) {
  const RigidBodyState s = unflatten(f);
  const Vec4 eff = fault_at(fault, t);
  Vec4 thrusts, drags;
  rotor_forces(s.rotor_speeds, eff, params, thrusts, drags);
  const BodyWrench wrench = mixer_wrench(thrusts, drags, params);
  return state_derivative(s, wrench, command, params);
}

}  // namespace

RigidBodyState step_rk4(const RigidBodyState& state, const MotorCommand& command,
                        const MotorFault& fault, const QuadrotorParams& params, double t,
                        double dt) {
  require(dt > 0 && dt <= 0.02, ErrorCode::ValidationError, "dt must be in (0, 0.02]");

  const FlatState s0 = flatten(state);
  const StateDerivative k1 = eval_derivative(s0, command, fault, params, t);
  const StateDerivative k2 =
      eval_derivative(axpy(s0, 0.5 * dt, k1), command, fault, params, t + 0.5 * dt);
  const StateDerivative k3 =
      eval_derivative(axpy(s0, 0.5 * dt, k2), command, fault, params, t + 0.5 * dt);
  const StateDerivative k4 = eval_derivative(axpy(s0, dt, k3), command, fault, params, t + dt);

  const double h6 = dt / 6.0;
  FlatState out = s0;
  out.p += h6 * (k1.position_dot + 2.0 * k2.position_dot + 2.0 * k3.position_dot +
                 k4.position_dot);
  out.v += h6 * (k1.velocity_dot + 2.0 * k2.velocity_dot + 2.0 * k3.velocity_dot +
                 k4.velocity_dot);
  out.q += h6 * (k1.attitude_dot + 2.0 * k2.attitude_dot + 2.0 * k3.attitude_dot +
                 k4.attitude_dot);
  out.w += h6 * (k1.body_rates_dot + 2.0 * k2.body_rates_dot + 2.0 * k3.body_rates_dot +
                 k4.body_rates_dot);
  out.rotor += h6 * (k1.rotor_speeds_dot + 2.0 * k2.rotor_speeds_dot +
                     2.0 * k3.rotor_speeds_dot + k4.rotor_speeds_dot);

  const double norm = out.q.norm();
  require(norm > 0 && std::isfinite(norm), ErrorCode::NonFiniteState,
          "quaternion norm degenerate after step");
  out.q /= norm;
  out.rotor = out.rotor.cwiseMax(0.0).cwiseMin(params.max_rotor_speed);

  RigidBodyState next = unflatten(out);
  require(next.finite(), ErrorCode::NonFiniteState, "state non-finite after step");
  return next;
}

}  // namespace ftc
