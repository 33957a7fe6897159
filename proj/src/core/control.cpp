#include "core/control.hpp"

#include <cmath>

#include "core/nn/checkpoint.hpp"

namespace ftc {

void PidGains::validate() const {
  const bool ok = kp_pos.minCoeff() >= 0.0 && kd_pos.minCoeff() >= 0.0 &&
                  ki_pos.minCoeff() >= 0.0 && kp_att >= 0.0 && kd_att >= 0.0 &&
                  kp_yaw >= 0.0 && kd_yaw >= 0.0;
  require(ok, ErrorCode::InvalidConfig, "pid gains must be >= 0");
  require(integral_limit > 0.0, ErrorCode::InvalidConfig, "pid.integral_limit must be > 0");
}

void pid_position(const RigidBodyState& state, const Vec3& target, const PidGains& gains,
                  const QuadrotorParams& nominal, double dt, PidState& pid,
                  double& collective_out, Quat& attitude_out) {
  const Vec3 e_p = target - state.position;
  const Vec3 e_v = -state.velocity;

  pid.integral += e_p * dt;
  pid.integral = pid.integral.cwiseMax(-gains.integral_limit).cwiseMin(gains.integral_limit);

  Vec3 a_des = gains.kp_pos.cwiseProduct(e_p) + gains.kd_pos.cwiseProduct(e_v) +
               gains.ki_pos.cwiseProduct(pid.integral);
  a_des.z() += nominal.gravity;

  collective_out = nominal.mass * a_des.norm();

  if (a_des.norm() < 1e-9) {
    attitude_out = Quat::Identity();
    return;
  }
  // tilt body z toward the desired acceleration, yaw held at zero
  const Vec3 z_b = a_des.normalized();
  const Vec3 x_c(1.0, 0.0, 0.0);
  Vec3 y_b = z_b.cross(x_c);
  if (y_b.norm() < 1e-9) y_b = Vec3(0.0, 1.0, 0.0);  // desired z along world x
  y_b.normalize();
  const Vec3 x_b = y_b.cross(z_b);
  Eigen::Matrix3d rot;
  rot.col(0) = x_b;
  rot.col(1) = y_b;
  rot.col(2) = z_b;
  attitude_out = Quat(rot).normalized();
}

MotorCommand pid_attitude(const RigidBodyState& state, const Quat& desired, double collective,
                          const PidGains& gains, const QuadrotorParams& nominal) {
  // body-frame rotation from current to desired attitude
  Quat q_err = state.attitude.conjugate() * desired;
  if (q_err.w() < 0.0) q_err.coeffs() = -q_err.coeffs();

  const Vec3& w = state.body_rates;
  Vec3 torque;
  torque.x() = gains.kp_att * q_err.x() - gains.kd_att * w.x();
  torque.y() = gains.kp_att * q_err.y() - gains.kd_att * w.y();
  torque.z() = gains.kp_yaw * q_err.z() - gains.kd_yaw * w.z();

  // invert the mixer: rows (collective, roll, pitch, yaw) are mutually
  // orthogonal with squared norm 4, so the inverse is the transpose over 4
  const double d = nominal.arm_length / std::sqrt(2.0);
  const double a = torque.x() / d;
  const double b = torque.y() / d;
  const double c = torque.z() * nominal.thrust_coeff / nominal.torque_coeff;

  MotorCommand cmd;
  for (int i = 0; i < 4; ++i) {
    const double f =
        (collective + kMixRoll[i] * a + kMixPitch[i] * b + kMixYaw[i] * c) / 4.0;
    const double omega = std::sqrt(std::max(f, 0.0) / nominal.thrust_coeff);
    cmd.u[i] = std::min(std::max(omega / nominal.max_rotor_speed, 0.0), 1.0);
  }
  return cmd;
}

const char* mode_name(ControllerMode m) {
  switch (m) {
    case ControllerMode::PidBaseline: return "pid";
    case ControllerMode::HybridTransformer: return "transformer";
    case ControllerMode::HybridCnn: return "cnn";
    case ControllerMode::HybridPrivileged: return "privileged";
    case ControllerMode::HybridZeroLatent: return "zero_latent";
  }
  return "unknown";
}

std::optional<ControllerMode> mode_from_name(const std::string& name) {
  if (name == "pid") return ControllerMode::PidBaseline;
  if (name == "transformer") return ControllerMode::HybridTransformer;
  if (name == "cnn") return ControllerMode::HybridCnn;
  if (name == "privileged") return ControllerMode::HybridPrivileged;
  if (name == "zero_latent") return ControllerMode::HybridZeroLatent;
  return std::nullopt;
}

HybridArtifacts HybridArtifacts::load(const std::string& checkpoint_prefix) {
  HybridArtifacts a;
  a.store = std::make_shared<nn::ParamStore>();
  nlohmann::json meta;
  try {
    meta = nn::load_checkpoint(checkpoint_prefix, *a.store);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::IoError)
      fail(ErrorCode::MissingModel, "checkpoint not found: " + checkpoint_prefix);
    throw;
  }
  const auto& pj = meta.at("policy");
  a.pcfg.obs_dim = pj.at("obs_dim").get<int>();
  a.pcfg.act_dim = pj.at("act_dim").get<int>();
  a.pcfg.ext_dim = pj.at("ext_dim").get<int>();
  a.pcfg.latent_dim = pj.at("latent_dim").get<int>();
  a.pcfg.hidden = pj.at("hidden").get<int>();
  a.pcfg.mu_hidden = pj.at("mu_hidden").get<int>();
  a.pcfg.logstd_min = pj.at("logstd_min").get<float>();
  a.pcfg.logstd_max = pj.at("logstd_max").get<float>();
  a.norm = norm_from_meta(meta.at("norm"));
  a.policy = std::make_shared<PolicyEval>(*a.store, a.pcfg);
  a.typed = std::make_shared<nn::TypedStore<float>>(*a.store);

  if (meta.contains("transformer")) {
    AdaptationConfig acfg;
    acfg.encoder = EncoderKind::Transformer;
    const auto& t = meta.at("transformer");
    acfg.transformer.model_dim = t.at("model_dim").get<int>();
    acfg.transformer.num_heads = t.at("num_heads").get<int>();
    acfg.transformer.num_layers = t.at("num_layers").get<int>();
    acfg.transformer.feedforward_dim = t.at("feedforward_dim").get<int>();
    acfg.transformer.history_len = t.at("history_len").get<int>();
    acfg.transformer.input_dim = t.at("input_dim").get<int>();
    acfg.transformer.latent_dim = t.at("latent_dim").get<int>();
    a.adaptation = acfg;
  } else if (meta.contains("cnn")) {
    AdaptationConfig acfg;
    acfg.encoder = EncoderKind::Cnn;
    const auto& c = meta.at("cnn");
    acfg.cnn.channels = c.at("channels").get<int>();
    acfg.cnn.kernel = c.at("kernel").get<int>();
    acfg.cnn.history_len = c.at("history_len").get<int>();
    acfg.cnn.input_dim = c.at("input_dim").get<int>();
    acfg.cnn.latent_dim = c.at("latent_dim").get<int>();
    a.adaptation = acfg;
  }
  a.checkpoint_prefix = checkpoint_prefix;
  a.checkpoint_sha256 = nn::checkpoint_hash(checkpoint_prefix);
  return a;
}

Controller::Controller(ControllerMode mode, const PidGains& gains,
                       const HybridArtifacts* artifacts)
    : mode_(mode), gains_(gains), artifacts_(artifacts) {
  gains_.validate();
  if (mode == ControllerMode::PidBaseline) return;
  require(artifacts != nullptr && artifacts->policy != nullptr, ErrorCode::MissingModel,
          std::string("controller mode '") + mode_name(mode) + "' needs a checkpoint");
  if (mode == ControllerMode::HybridTransformer) {
    require(artifacts->has_phi() &&
                artifacts->adaptation->encoder == EncoderKind::Transformer,
            ErrorCode::MissingModel,
            "transformer mode needs a phase-2 checkpoint with a transformer encoder");
  }
  if (mode == ControllerMode::HybridCnn) {
    require(artifacts->has_phi() && artifacts->adaptation->encoder == EncoderKind::Cnn,
            ErrorCode::MissingModel,
            "cnn mode needs a phase-2 checkpoint with a cnn encoder");
  }
  if (mode == ControllerMode::HybridTransformer || mode == ControllerMode::HybridCnn)
    history_ = std::make_unique<HistoryBuffer>(artifacts->adaptation->history_len());
}

MotorCommand Controller::step(const Env& env) {
  last_z_.fill(0.0f);
  last_zhat_.fill(0.0f);

  // privileged latent is logged whenever a checkpoint is on hand
  if (artifacts_ != nullptr) {
    float ext[kExtrinsicsDim];
    const ExtVec e = artifacts_->norm.normalize(env.raw_extrinsics_at(env.time()));
    for (int j = 0; j < kExtrinsicsDim; ++j) ext[j] = static_cast<float>(e[j]);
    artifacts_->policy->encode_extrinsics(ext, last_z_.data());
  }

  if (mode_ == ControllerMode::PidBaseline) {
    double collective = 0.0;
    Quat desired = Quat::Identity();
    pid_position(env.state(), env.target(), gains_, env.config().nominal, env.control_dt(),
                 pid_, collective, desired);
    return pid_attitude(env.state(), desired, collective, gains_, env.config().nominal);
  }

  float obs[kObservationDim];
  const ObsVec o = env.observation();
  for (int j = 0; j < kObservationDim; ++j) obs[j] = static_cast<float>(o[j]);

  switch (mode_) {
    case ControllerMode::HybridPrivileged:
      last_zhat_ = last_z_;
      break;
    case ControllerMode::HybridZeroLatent:
      break;  // zeros
    case ControllerMode::HybridTransformer:
    case ControllerMode::HybridCnn:
      if (history_->valid_len() > 0)
        infer_latent(*artifacts_->typed, *artifacts_->adaptation, *history_,
                     last_zhat_.data());
      break;
    default:
      break;
  }

  float action[4];
  artifacts_->policy->mean_action(obs, last_zhat_.data(), action);
  if (history_) history_->push(obs, action);

  MotorCommand cmd;
  for (int j = 0; j < kActionDim; ++j) cmd.u[j] = static_cast<double>(action[j]);
  return cmd;
}

}  // namespace ftc
