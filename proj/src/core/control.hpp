#pragma once

#include <memory>
#include <optional>
#include <string>

#include "core/adaptation.hpp"
#include "core/env.hpp"
#include "core/history.hpp"
#include "core/policy.hpp"

namespace ftc {

// Cascade PID baseline: position loop -> desired attitude + collective,
// attitude loop -> torques, inverse mixer -> per-motor commands.
struct PidGains {
  // Position loop (acceleration per meter / per m/s); integral with clamp.
  // ki * integral_limit bounds the trim authority per axis; the z values
  // cover the worst randomized mass / thrust-coefficient corner (~6 m/s^2)
  // with margin.
  Vec3 kp_pos{4.0, 4.0, 6.0};
  Vec3 kd_pos{3.0, 3.0, 4.0};
  Vec3 ki_pos{1.0, 1.0, 3.0};
  double integral_limit = 2.5;  // m s, per axis

  // attitude loop (torque per unit quaternion component / per rad/s)
  double kp_att = 1.0;
  double kd_att = 0.09;
  double kp_yaw = 0.45;
  double kd_yaw = 0.081;

  void validate() const;
};

struct PidState {
  Vec3 integral = Vec3::Zero();

  void reset() { integral.setZero(); }
};

// desired collective thrust (N) and attitude from the position loop; the
// integrator inside `pid` advances by dt
void pid_position(const RigidBodyState& state, const Vec3& target, const PidGains& gains,
                  const QuadrotorParams& nominal, double dt, PidState& pid,
                  double& collective_out, Quat& attitude_out);

// quaternion-error P-D attitude loop + inverse mixer + thrust->command map
MotorCommand pid_attitude(const RigidBodyState& state, const Quat& desired,
                          double collective, const PidGains& gains,
                          const QuadrotorParams& nominal);

enum class ControllerMode {
  PidBaseline,
  HybridTransformer,
  HybridCnn,
  HybridPrivileged,
  HybridZeroLatent,
};

const char* mode_name(ControllerMode m);
std::optional<ControllerMode> mode_from_name(const std::string& name);

// Checkpoint bundle for the learned modes. `phi` members are only present
// when the checkpoint carries a history encoder.
struct HybridArtifacts {
  std::shared_ptr<nn::ParamStore> store;
  PolicyConfig pcfg;
  ExtrinsicsNormalizer norm;
  std::shared_ptr<PolicyEval> policy;
  std::shared_ptr<nn::TypedStore<float>> typed;  // phi evaluation
  std::optional<AdaptationConfig> adaptation;
  std::string checkpoint_prefix;
  std::string checkpoint_sha256;

  static HybridArtifacts load(const std::string& checkpoint_prefix);
  bool has_phi() const { return adaptation.has_value(); }
};

// One controller instance per episode. Deployment is deterministic: the
// learned modes emit the policy mean action, PID keeps only its integrator.
class Controller {
 public:
  Controller(ControllerMode mode, const PidGains& gains, const HybridArtifacts* artifacts);

  MotorCommand step(const Env& env);

  ControllerMode mode() const { return mode_; }
  // latents from the last step() call, for trajectory logging
  const std::array<float, 8>& last_z() const { return last_z_; }
  const std::array<float, 8>& last_zhat() const { return last_zhat_; }
  bool has_privileged_latent() const { return artifacts_ != nullptr; }

 private:
  ControllerMode mode_;
  PidGains gains_;
  const HybridArtifacts* artifacts_;
  PidState pid_;
  std::unique_ptr<HistoryBuffer> history_;
  std::array<float, 8> last_z_{};
  std::array<float, 8> last_zhat_{};
};

}  // namespace ftc
