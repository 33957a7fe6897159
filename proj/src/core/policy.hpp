#pragma once

#include <array>

#include "core/nn/layers.hpp"
#include "core/rng.hpp"

namespace ftc {

// Gaussian motor-command policy with a privileged-extrinsics encoder:
//   pi : concat(observation, z) -> action mean in [0,1]^4 (tanh-squashed MLP)
//   v  : concat(observation, z) -> scalar value
//   mu : extrinsics e in R^10   -> latent z in R^8
// plus a learned state-independent log-std vector clamped to
// [logstd_min, logstd_max]. The floor keeps exploration alive for the whole
// run: without it the log-std drifts to sigma ~ 0.01 long before the policy
// has solved the severe-fault corner, and training stalls there.
struct PolicyConfig {
  int obs_dim = 22;
  int act_dim = 4;
  int ext_dim = 10;
  int latent_dim = 8;
  int hidden = 128;
  int mu_hidden = 32;
  float logstd_init = -1.2039728f;  // ln 0.3
  float logstd_min = -2.3f;         // sigma floor ~ 0.1
  float logstd_max = 1.0f;
};

nn::MlpSpec pi_spec(const PolicyConfig& cfg);
nn::MlpSpec v_spec(const PolicyConfig& cfg);
nn::MlpSpec mu_spec(const PolicyConfig& cfg);

// registers pi.*, pi.logstd, v.*, mu.* (this order fixes the manifest)
void policy_register(nn::ParamStore& store, const PolicyConfig& cfg, Rng& rng);

struct ActionSample {
  std::array<float, 4> action;  // clamped to [0,1]
  std::array<float, 4> raw;     // pre-clamp draw; density is evaluated here
  float log_prob;
};

// Plain float forward paths used for rollouts and deployment. The log-prob
// arithmetic mirrors the tape loss graph operation-for-operation so that a
// freshly collected batch reproduces ratio = 1 exactly in the first epoch.
class PolicyEval {
 public:
  PolicyEval(const nn::ParamStore& store, PolicyConfig cfg);

  void mean_action(const float* obs, const float* z, float* out) const;
  float value(const float* obs, const float* z) const;
  void encode_extrinsics(const float* e, float* z) const;
  void logstd(float* out) const;  // clamped

  // log-density of the pre-clamp point x under N(mean, diag(std^2))
  float log_prob(const float* x, const float* mean) const;

  ActionSample sample(const float* obs, const float* z, Rng& rng) const;

  const PolicyConfig& config() const { return cfg_; }

 private:
  PolicyConfig cfg_;
  nn::TypedStore<float> ps_;
  nn::MlpSpec pi_, v_, mu_;
};

// -0.5 * ln(2*pi) per action dimension, folded into log-prob as a constant
inline constexpr float kHalfLog2Pi = 0.91893853320467274f;

}  // namespace ftc
