#include "core/policy.hpp"

#include <cmath>

namespace ftc {

nn::MlpSpec pi_spec(const PolicyConfig& cfg) {
  return {{cfg.obs_dim + cfg.latent_dim, cfg.hidden, cfg.hidden, cfg.act_dim}};
}
nn::MlpSpec v_spec(const PolicyConfig& cfg) {
  return {{cfg.obs_dim + cfg.latent_dim, cfg.hidden, cfg.hidden, 1}};
}
nn::MlpSpec mu_spec(const PolicyConfig& cfg) {
  return {{cfg.ext_dim, cfg.mu_hidden, cfg.latent_dim}};
}

void policy_register(nn::ParamStore& store, const PolicyConfig& cfg, Rng& rng) {
  nn::mlp_register(store, "pi", pi_spec(cfg), rng);
  store.add("pi.logstd", nn::Tensor::full({1, cfg.act_dim}, cfg.logstd_init));
  nn::mlp_register(store, "v", v_spec(cfg), rng);
  nn::mlp_register(store, "mu", mu_spec(cfg), rng);
}

PolicyEval::PolicyEval(const nn::ParamStore& store, PolicyConfig cfg)
    : cfg_(cfg), ps_(store), pi_(pi_spec(cfg)), v_(v_spec(cfg)), mu_(mu_spec(cfg)) {}

void PolicyEval::mean_action(const float* obs, const float* z, float* out) const {
  std::vector<float> in(cfg_.obs_dim + cfg_.latent_dim);
  std::copy(obs, obs + cfg_.obs_dim, in.begin());
  std::copy(z, z + cfg_.latent_dim, in.begin() + cfg_.obs_dim);
  nn::mlp_eval(ps_, "pi", pi_, in.data(), 1, out);
  // same float op order as the tape graph: tanh, +1, *0.5
  for (int j = 0; j < cfg_.act_dim; ++j) out[j] = (std::tanh(out[j]) + 1.0f) * 0.5f;
}

float PolicyEval::value(const float* obs, const float* z) const {
  std::vector<float> in(cfg_.obs_dim + cfg_.latent_dim);
  std::copy(obs, obs + cfg_.obs_dim, in.begin());
  std::copy(z, z + cfg_.latent_dim, in.begin() + cfg_.obs_dim);
  float out = 0.0f;
  nn::mlp_eval(ps_, "v", v_, in.data(), 1, &out);
  return out;
}

void PolicyEval::encode_extrinsics(const float* e, float* z) const {
  nn::mlp_eval(ps_, "mu", mu_, e, 1, z);
}

void PolicyEval::logstd(float* out) const {
  const auto& raw = ps_.vec("pi.logstd");
  for (int j = 0; j < cfg_.act_dim; ++j)
    out[j] = std::min(std::max(raw[j], cfg_.logstd_min), cfg_.logstd_max);
}

float PolicyEval::log_prob(const float* x, const float* mean) const {
  float ls[4];
  logstd(ls);
  // mirror the tape ops: standardized = (x - mean) * exp(-logstd); the sum of
  // squares and the sum of log-stds both accumulate in double then round
  float sq[4];
  for (int j = 0; j < cfg_.act_dim; ++j) {
    const float d = x[j] - mean[j];
    const float s = d * std::exp(-ls[j]);
    sq[j] = s * s;
  }
  float lp = -0.5f * static_cast<float>(nn::sum_acc(sq, cfg_.act_dim));
  lp += -static_cast<float>(nn::sum_acc(ls, cfg_.act_dim));
  lp += -kHalfLog2Pi * static_cast<float>(cfg_.act_dim);
  return lp;
}

ActionSample PolicyEval::sample(const float* obs, const float* z, Rng& rng) const {
  ActionSample s{};
  float mean[4];
  mean_action(obs, z, mean);
  float ls[4];
  logstd(ls);
  for (int j = 0; j < cfg_.act_dim; ++j) {
    const float noise = static_cast<float>(rng.normal());
    s.raw[j] = mean[j] + std::exp(ls[j]) * noise;
    s.action[j] = std::min(std::max(s.raw[j], 0.0f), 1.0f);
  }
  s.log_prob = log_prob(s.raw.data(), mean);
  return s;
}

}  // namespace ftc
