#pragma once

#include <string>

#include "core/history.hpp"
#include "core/nn/layers.hpp"
#include "core/ppo.hpp"

namespace ftc {

enum class EncoderKind { Transformer, Cnn };

struct AdaptationConfig {
  EncoderKind encoder = EncoderKind::Transformer;
  nn::TransformerConfig transformer;
  nn::CnnConfig cnn;
  int64_t total_steps = 500'000;
  double lr = 1e-3;
  int batch_windows = 512;
  int window_stride = 10;   // record a training window every N control steps
  int num_envs = 8;
  int steps_per_iter = 2000;  // env steps collected per iteration
  int updates_per_iter = 2;
  int replay_capacity = 20000;   // newest windows kept for batching
  int holdout_every = 10;        // every Nth recorded window is held out
  int holdout_capacity = 2000;
  double max_grad_norm = 0.5;

  int history_len() const {
    return encoder == EncoderKind::Transformer ? transformer.history_len : cnn.history_len;
  }
  int latent_dim() const {
    return encoder == EncoderKind::Transformer ? transformer.latent_dim : cnn.latent_dim;
  }
  void validate() const;
};

// registers phi.* for the configured encoder
void adaptation_register(nn::ParamStore& store, const AdaptationConfig& cfg, Rng& rng);

// z-hat from the materialized history window; EmptyHistory when nothing has
// been pushed yet (callers substitute the zero latent)
void infer_latent(const nn::TypedStore<float>& ps, const AdaptationConfig& cfg,
                  const HistoryBuffer& hist, float* z_out);

struct Phase2Result {
  std::string checkpoint_prefix;
  double final_train_mse = 0.0;
  double final_holdout_mse = 0.0;
  double holdout_target_var = 0.0;  // constant-predictor baseline MSE
  double r2 = 0.0;
  int64_t env_steps = 0;
};

// Supervised distillation: roll out the frozen policy driven by z-hat,
// regress phi(history) onto the frozen privileged latent z = mu(e_t).
// Writes <run_dir>/train_phase2_<encoder>.csv and
// <run_dir>/checkpoints/phase2_<encoder>.{json,bin}.
Phase2Result train_phase2(const std::string& run_dir, const std::string& phase1_prefix,
                          const EnvConfig& env_cfg, const AdaptationConfig& acfg,
                          uint64_t seed, int threads);

const char* encoder_name(EncoderKind k);

}  // namespace ftc
