#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "core/env.hpp"
#include "core/nn/adam.hpp"
#include "core/policy.hpp"

namespace ftc {

struct PpoConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  float clip_eps = 0.2f;
  int epochs = 10;
  int minibatch = 256;
  int rollout_steps = 4096;  // per iteration, summed across envs
  int num_envs = 8;
  float entropy_coeff = 0.002f;
  float value_coeff = 0.5f;
  int64_t total_steps = 2'000'000;
  double lr = 3e-4;
  double max_grad_norm = 0.5;

  void validate() const;
};

// flat batch of transitions; per-env segments are concatenated in env order
struct Trajectory {
  int steps = 0;
  std::vector<float> obs;        // steps x 22
  std::vector<float> ext;        // steps x 10, normalized extrinsics at step time
  std::vector<float> raw_act;    // steps x 4, pre-clamp draws
  std::vector<float> act;        // steps x 4, clamped commands as applied
  std::vector<float> logp;       // steps
  std::vector<float> rew;        // steps
  std::vector<float> val;        // steps
  std::vector<float> next_val;   // steps, V(s_{t+1}); 0 where terminal
  std::vector<uint8_t> boundary;  // episode ended after this step (any cause)
  std::vector<uint8_t> terminal;  // ended by crash: no bootstrap
  // episodes completed during collection
  int episodes = 0;
  int crashes = 0;
  double episode_return_sum = 0.0;
  int64_t episode_len_sum = 0;

  void reserve(int n);
  void append(const Trajectory& other);
};

// advantages/returns from one env's contiguous segment
void gae(const std::vector<double>& rewards, const std::vector<double>& values,
         const std::vector<double>& next_values, const std::vector<uint8_t>& terminal,
         const std::vector<uint8_t>& boundary, double gamma, double lambda,
         std::vector<double>& adv_out, std::vector<double>& ret_out);

// batch normalization to zero mean / unit std (eps 1e-8 on the std)
std::vector<float> normalize_advantages(const std::vector<double>& adv);

// Persistent bank of parallel envs. Episodes continue across rollout chunks;
// tasks and spawn noise come from per-env counters so collection is
// reproducible and independent of chunk boundaries.
class Collector {
 public:
  Collector(const EnvConfig& cfg, int num_envs, uint64_t master_seed);

  // runs each env for steps_per_env control steps under the given policy
  Trajectory collect(const PolicyEval& policy, int steps_per_env, int threads);

  const Env& env(int i) const { return envs_[i]; }

 private:
  void reset_env(int i);
  void collect_env(int i, const PolicyEval& policy, int steps_per_env, Trajectory& out);

  EnvConfig cfg_;
  uint64_t master_seed_;
  std::vector<Env> envs_;
  std::vector<Rng> action_rngs_;
  std::vector<int64_t> reset_counts_;
  std::vector<std::array<float, 22>> cur_obs_;
  std::vector<double> ep_return_;
  std::vector<int> ep_len_;
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_frac = 0.0;
  double approx_kl = 0.0;
};

// one full PPO optimization pass (epochs x minibatches) over a batch
UpdateStats ppo_update(nn::ParamStore& store, nn::Adam& adam, const PolicyConfig& pcfg,
                       const PpoConfig& cfg, const Trajectory& batch, Rng& shuffle_rng);

struct Phase1Result {
  std::string checkpoint_prefix;
  double final_crash_rate = 0.0;
  int64_t env_steps = 0;
};

// full phase-1 run; writes <run_dir>/train_phase1.csv and
// <run_dir>/checkpoints/phase1.{json,bin}
Phase1Result train_phase1(const std::string& run_dir, const EnvConfig& env_cfg,
                          const PolicyConfig& pcfg, const PpoConfig& cfg, uint64_t seed,
                          int threads);

// shared by phase-1/phase-2: checkpoint metadata carrying the extrinsics
// normalization so later runs reuse the training-time latent space
nlohmann::json norm_meta(const ExtrinsicsNormalizer& norm);
ExtrinsicsNormalizer norm_from_meta(const nlohmann::json& meta);

}  // namespace ftc
