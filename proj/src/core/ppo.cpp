#include "core/ppo.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include "core/nn/checkpoint.hpp"
#include "core/nn/tape.hpp"

namespace ftc {

void PpoConfig::validate() const {
  require(gamma > 0.0 && gamma <= 1.0, ErrorCode::InvalidConfig, "ppo.gamma must be in (0,1]");
  require(lambda > 0.0 && lambda <= 1.0, ErrorCode::InvalidConfig, "ppo.lambda must be in (0,1]");
  require(clip_eps > 0.0f, ErrorCode::InvalidConfig, "ppo.clip_eps must be > 0");
  require(epochs >= 1, ErrorCode::InvalidConfig, "ppo.epochs must be >= 1");
  require(minibatch >= 1, ErrorCode::InvalidConfig, "ppo.minibatch must be >= 1");
  require(num_envs >= 1, ErrorCode::InvalidConfig, "ppo.num_envs must be >= 1");
  require(rollout_steps >= num_envs && rollout_steps % num_envs == 0, ErrorCode::InvalidConfig,
          "ppo.rollout_steps must be a positive multiple of ppo.num_envs");
  require(total_steps >= 1, ErrorCode::InvalidConfig, "ppo.total_steps must be >= 1");
  require(lr > 0.0, ErrorCode::InvalidConfig, "ppo.lr must be > 0");
  require(entropy_coeff >= 0.0f && value_coeff >= 0.0f, ErrorCode::InvalidConfig,
          "ppo coefficients must be >= 0");
  require(max_grad_norm > 0.0, ErrorCode::InvalidConfig, "ppo.max_grad_norm must be > 0");
}

void Trajectory::reserve(int n) {
  obs.reserve(static_cast<size_t>(n) * kObservationDim);
  ext.reserve(static_cast<size_t>(n) * kExtrinsicsDim);
  raw_act.reserve(static_cast<size_t>(n) * kActionDim);
  act.reserve(static_cast<size_t>(n) * kActionDim);
  logp.reserve(n);
  rew.reserve(n);
  val.reserve(n);
  next_val.reserve(n);
  boundary.reserve(n);
  terminal.reserve(n);
}

void Trajectory::append(const Trajectory& o) {
  steps += o.steps;
  obs.insert(obs.end(), o.obs.begin(), o.obs.end());
  ext.insert(ext.end(), o.ext.begin(), o.ext.end());
  raw_act.insert(raw_act.end(), o.raw_act.begin(), o.raw_act.end());
  act.insert(act.end(), o.act.begin(), o.act.end());
  logp.insert(logp.end(), o.logp.begin(), o.logp.end());
  rew.insert(rew.end(), o.rew.begin(), o.rew.end());
  val.insert(val.end(), o.val.begin(), o.val.end());
  next_val.insert(next_val.end(), o.next_val.begin(), o.next_val.end());
  boundary.insert(boundary.end(), o.boundary.begin(), o.boundary.end());
  terminal.insert(terminal.end(), o.terminal.begin(), o.terminal.end());
  episodes += o.episodes;
  crashes += o.crashes;
  episode_return_sum += o.episode_return_sum;
  episode_len_sum += o.episode_len_sum;
}

void gae(const std::vector<double>& rewards, const std::vector<double>& values,
         const std::vector<double>& next_values, const std::vector<uint8_t>& terminal,
         const std::vector<uint8_t>& boundary, double gamma, double lambda,
         std::vector<double>& adv_out, std::vector<double>& ret_out) {
  const size_t n = rewards.size();
  require(values.size() == n && next_values.size() == n && terminal.size() == n &&
              boundary.size() == n,
          ErrorCode::LengthMismatch, "gae: array lengths differ");
  adv_out.assign(n, 0.0);
  ret_out.assign(n, 0.0);
  double running = 0.0;
  for (size_t i = n; i-- > 0;) {
    const double bootstrap = terminal[i] ? 0.0 : next_values[i];
    const double delta = rewards[i] + gamma * bootstrap - values[i];
    running = delta + gamma * lambda * (boundary[i] ? 0.0 : running);
    adv_out[i] = running;
    ret_out[i] = running + values[i];
  }
}

// ---- Collector ----

namespace {
constexpr uint64_t kEnvStream = 0xE17;
constexpr uint64_t kActionStream = 0xAC7;

void obs_to_float(const ObsVec& o, float* out) {
  for (int i = 0; i < kObservationDim; ++i) out[i] = static_cast<float>(o[i]);
}
}  // namespace

Collector::Collector(const EnvConfig& cfg, int num_envs, uint64_t master_seed)
    : cfg_(cfg), master_seed_(master_seed) {
  require(num_envs >= 1, ErrorCode::InvalidConfig, "collector needs at least one env");
  envs_.reserve(num_envs);
  for (int i = 0; i < num_envs; ++i) {
    envs_.emplace_back(cfg, derive_seed(master_seed, {kEnvStream, static_cast<uint64_t>(i)}));
    action_rngs_.emplace_back(
        derive_seed(master_seed, {kActionStream, static_cast<uint64_t>(i)}));
  }
  reset_counts_.assign(num_envs, 0);
  cur_obs_.resize(num_envs);
  ep_return_.assign(num_envs, 0.0);
  ep_len_.assign(num_envs, 0);
  for (int i = 0; i < num_envs; ++i) reset_env(i);
}

void Collector::reset_env(int i) {
  envs_[i].reset();
  ++reset_counts_[i];
  ep_return_[i] = 0.0;
  ep_len_[i] = 0;
  obs_to_float(envs_[i].observation(), cur_obs_[i].data());
}

void Collector::collect_env(int i, const PolicyEval& policy, int steps_per_env,
                            Trajectory& out) {
  out.reserve(steps_per_env);
  Env& env = envs_[i];
  Rng& arng = action_rngs_[i];

  float ext_f[kExtrinsicsDim];
  float z[8];
  {
    const ExtVec e = env.normalizer().normalize(env.raw_extrinsics_at(env.time()));
    for (int j = 0; j < kExtrinsicsDim; ++j) ext_f[j] = static_cast<float>(e[j]);
  }
  policy.encode_extrinsics(ext_f, z);
  float value = policy.value(cur_obs_[i].data(), z);

  for (int t = 0; t < steps_per_env; ++t) {
    const ActionSample s = policy.sample(cur_obs_[i].data(), z, arng);
    MotorCommand cmd;
    for (int j = 0; j < kActionDim; ++j) cmd.u[j] = static_cast<double>(s.action[j]);

    const Env::StepResult r = env.step(cmd);
    ep_return_[i] += r.reward;
    ep_len_[i] += 1;

    out.obs.insert(out.obs.end(), cur_obs_[i].begin(), cur_obs_[i].end());
    out.ext.insert(out.ext.end(), ext_f, ext_f + kExtrinsicsDim);
    out.raw_act.insert(out.raw_act.end(), s.raw.begin(), s.raw.end());
    out.act.insert(out.act.end(), s.action.begin(), s.action.end());
    out.logp.push_back(s.log_prob);
    out.rew.push_back(static_cast<float>(r.reward));
    out.val.push_back(value);
    out.steps += 1;

    if (r.status.running() || r.status.kind == EpisodeStatus::Kind::TimeLimit) {
      // bootstrap through the post-step state (also the next step's input)
      float next_obs[kObservationDim];
      obs_to_float(r.observation, next_obs);
      const ExtVec e = env.normalizer().normalize(env.raw_extrinsics_at(env.time()));
      for (int j = 0; j < kExtrinsicsDim; ++j) ext_f[j] = static_cast<float>(e[j]);
      policy.encode_extrinsics(ext_f, z);
      const float next_value = policy.value(next_obs, z);
      out.next_val.push_back(next_value);
      if (r.status.running()) {
        out.boundary.push_back(0);
        out.terminal.push_back(0);
        std::copy(next_obs, next_obs + kObservationDim, cur_obs_[i].begin());
        value = next_value;
        continue;
      }
      out.boundary.push_back(1);
      out.terminal.push_back(0);
    } else {
      out.next_val.push_back(0.0f);
      out.boundary.push_back(1);
      out.terminal.push_back(1);
      out.crashes += 1;
    }

    out.episodes += 1;
    out.episode_return_sum += ep_return_[i];
    out.episode_len_sum += ep_len_[i];
    reset_env(i);
    {
      const ExtVec e = env.normalizer().normalize(env.raw_extrinsics_at(env.time()));
      for (int j = 0; j < kExtrinsicsDim; ++j) ext_f[j] = static_cast<float>(e[j]);
    }
    policy.encode_extrinsics(ext_f, z);
    value = policy.value(cur_obs_[i].data(), z);
  }
}

Trajectory Collector::collect(const PolicyEval& policy, int steps_per_env, int threads) {
  const int n = static_cast<int>(envs_.size());
  std::vector<Trajectory> parts(n);
  if (threads <= 1 || n == 1) {
    for (int i = 0; i < n; ++i) collect_env(i, policy, steps_per_env, parts[i]);
  } else {
    const int workers = std::min(threads, n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w]() {
        for (int i = w; i < n; i += workers) collect_env(i, policy, steps_per_env, parts[i]);
      });
    }
    for (auto& t : pool) t.join();
  }
  Trajectory merged;
  merged.reserve(n * steps_per_env);
  for (int i = 0; i < n; ++i) merged.append(parts[i]);
  return merged;
}

// ---- PPO update ----

namespace {
// gathers minibatch rows (row-major) from a flat array
nn::Tensor gather_rows(const std::vector<float>& flat, int width,
                       const std::vector<int>& index, int lo, int hi) {
  nn::Tensor out({hi - lo, width});
  for (int r = lo; r < hi; ++r) {
    const int src = index[r];
    std::copy(flat.begin() + static_cast<int64_t>(src) * width,
              flat.begin() + static_cast<int64_t>(src + 1) * width,
              out.data.begin() + static_cast<int64_t>(r - lo) * width);
  }
  return out;
}

nn::Tensor gather_col(const std::vector<float>& v, const std::vector<int>& index, int lo,
                      int hi) {
  nn::Tensor out({hi - lo, 1});
  for (int r = lo; r < hi; ++r) out.data[r - lo] = v[index[r]];
  return out;
}
}  // namespace

std::vector<float> normalize_advantages(const std::vector<double>& adv) {
  double mean = 0.0;
  for (double a : adv) mean += a;
  mean /= static_cast<double>(adv.size());
  double var = 0.0;
  for (double a : adv) var += (a - mean) * (a - mean);
  var /= static_cast<double>(adv.size());
  const double inv_std = 1.0 / (std::sqrt(var) + 1e-8);
  std::vector<float> out(adv.size());
  for (size_t i = 0; i < adv.size(); ++i)
    out[i] = static_cast<float>((adv[i] - mean) * inv_std);
  return out;
}

UpdateStats ppo_update(nn::ParamStore& store, nn::Adam& adam, const PolicyConfig& pcfg,
                       const PpoConfig& cfg, const Trajectory& batch, Rng& shuffle_rng) {
  require(batch.steps > 0, ErrorCode::InvalidConfig, "ppo_update: empty batch");

  // advantages and returns per env segment (segments are concatenated in env
  // order; boundaries inside a segment are flagged, so one pass suffices as
  // long as the last step of each env segment carries its own bootstrap)
  std::vector<double> rew(batch.rew.begin(), batch.rew.end());
  std::vector<double> val(batch.val.begin(), batch.val.end());
  std::vector<double> nval(batch.next_val.begin(), batch.next_val.end());
  std::vector<double> adv, ret;
  {
    // env segments must not leak advantage across their junction; the merge
    // keeps per-env order, so force a recursion cut at each segment end
    std::vector<uint8_t> boundary = batch.boundary;
    const int per_env = batch.steps / std::max(1, cfg.num_envs);
    if (per_env > 0 && batch.steps % per_env == 0)
      for (int i = per_env - 1; i < batch.steps; i += per_env) boundary[i] = 1;
    // note: the segment-final step keeps terminal=0, so its delta still
    // bootstraps through next_val; flagging it as a boundary only stops the
    // GAE recursion, which is exactly the truncation treatment
    gae(rew, val, nval, batch.terminal, boundary, cfg.gamma, cfg.lambda, adv, ret);
  }

  std::vector<float> adv_f = normalize_advantages(adv);
  std::vector<float> ret_f(batch.steps);
  for (int i = 0; i < batch.steps; ++i) ret_f[i] = static_cast<float>(ret[i]);

  const auto spec_pi = pi_spec(pcfg);
  const auto spec_v = v_spec(pcfg);
  const auto spec_mu = mu_spec(pcfg);

  std::vector<int> index(batch.steps);
  for (int i = 0; i < batch.steps; ++i) index[i] = i;

  UpdateStats stats;
  int64_t n_updates = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Fisher-Yates with the dedicated shuffle stream
    for (int i = batch.steps - 1; i > 0; --i) {
      const int j = static_cast<int>(shuffle_rng.uniform_index(static_cast<uint64_t>(i) + 1));
      std::swap(index[i], index[j]);
    }
    for (int lo = 0; lo + cfg.minibatch <= batch.steps; lo += cfg.minibatch) {
      const int hi = lo + cfg.minibatch;
      const int B = hi - lo;

      nn::Tape tape(&store);
      const auto obs_c = tape.constant(gather_rows(batch.obs, kObservationDim, index, lo, hi));
      const auto ext_c = tape.constant(gather_rows(batch.ext, kExtrinsicsDim, index, lo, hi));
      const auto raw_c = tape.constant(gather_rows(batch.raw_act, kActionDim, index, lo, hi));
      const auto adv_c = tape.constant(gather_col(adv_f, index, lo, hi));
      const auto ret_c = tape.constant(gather_col(ret_f, index, lo, hi));
      const auto oldlp_c = tape.constant(gather_col(batch.logp, index, lo, hi));

      const auto z = nn::mlp_apply(tape, "mu", spec_mu, ext_c);
      const auto x = tape.concat_cols(obs_c, z);
      const auto mean_n =
          tape.scale(tape.add_scalar(tape.tanh(nn::mlp_apply(tape, "pi", spec_pi, x)), 1.0f),
                     0.5f);
      const auto logstd =
          tape.clamp(tape.param("pi.logstd"), pcfg.logstd_min, pcfg.logstd_max);
      const auto inv_sigma = tape.exp(tape.scale(logstd, -1.0f));
      const auto standardized = tape.mul_rowvec(tape.sub(raw_c, mean_n), inv_sigma);
      auto lp = tape.scale(tape.sum_cols(tape.square(standardized)), -0.5f);
      lp = tape.add_rowvec(lp, tape.scale(tape.sum_all(logstd), -1.0f));
      lp = tape.add_scalar(lp, -kHalfLog2Pi * static_cast<float>(pcfg.act_dim));

      const auto ratio = tape.exp(tape.sub(lp, oldlp_c));
      const auto surr1 = tape.mul(ratio, adv_c);
      const auto surr2 =
          tape.mul(tape.clamp(ratio, 1.0f - cfg.clip_eps, 1.0f + cfg.clip_eps), adv_c);
      const auto policy_loss = tape.scale(tape.mean_all(tape.min_ew(surr1, surr2)), -1.0f);

      const auto v_out = nn::mlp_apply(tape, "v", spec_v, x);
      const auto value_loss = tape.mean_all(tape.square(tape.sub(v_out, ret_c)));

      // diagonal Gaussian entropy: sum(logstd) + act_dim/2 * ln(2*pi*e)
      const auto entropy = tape.add_scalar(
          tape.sum_all(logstd),
          static_cast<float>(pcfg.act_dim) * (kHalfLog2Pi + 0.5f));

      auto total = tape.add(policy_loss, tape.scale(value_loss, cfg.value_coeff));
      total = tape.add(total, tape.scale(entropy, -cfg.entropy_coeff));

      const float loss_v = tape.value(total).data[0];
      require(std::isfinite(loss_v), ErrorCode::NonFiniteLoss,
              "ppo_update: non-finite loss, run diverged");

      store.zero_grads();
      tape.backward(total);
      nn::clip_grad_norm(store, cfg.max_grad_norm);
      adam.step(store);

      // detached statistics from the recorded forward values
      stats.policy_loss += tape.value(policy_loss).data[0];
      stats.value_loss += tape.value(value_loss).data[0];
      stats.entropy += tape.value(entropy).data[0];
      double clip_n = 0.0, kl = 0.0;
      for (int i = 0; i < B; ++i) {
        const float r = tape.value(ratio).data[i];
        if (std::fabs(r - 1.0f) > cfg.clip_eps) clip_n += 1.0;
        kl += static_cast<double>(tape.value(oldlp_c).data[i]) -
              static_cast<double>(tape.value(lp).data[i]);
      }
      stats.clip_frac += clip_n / B;
      stats.approx_kl += kl / B;
      ++n_updates;
    }
  }
  if (n_updates > 0) {
    stats.policy_loss /= static_cast<double>(n_updates);
    stats.value_loss /= static_cast<double>(n_updates);
    stats.entropy /= static_cast<double>(n_updates);
    stats.clip_frac /= static_cast<double>(n_updates);
    stats.approx_kl /= static_cast<double>(n_updates);
  }
  return stats;
}

// ---- phase 1 ----

nlohmann::json norm_meta(const ExtrinsicsNormalizer& norm) {
  nlohmann::json lo = nlohmann::json::array(), hi = nlohmann::json::array();
  for (const auto& r : norm.ranges) {
    lo.push_back(r.lo);
    hi.push_back(r.hi);
  }
  return {{"lo", lo}, {"hi", hi}};
}

ExtrinsicsNormalizer norm_from_meta(const nlohmann::json& meta) {
  ExtrinsicsNormalizer norm;
  const auto& lo = meta.at("lo");
  const auto& hi = meta.at("hi");
  require(lo.size() == kExtrinsicsDim && hi.size() == kExtrinsicsDim,
          ErrorCode::ValidationError, "extrinsics normalization needs 10 ranges");
  for (int i = 0; i < kExtrinsicsDim; ++i)
    norm.ranges[i] = Range{lo[i].get<double>(), hi[i].get<double>()};
  return norm;
}

Phase1Result train_phase1(const std::string& run_dir, const EnvConfig& env_cfg,
                          const PolicyConfig& pcfg, const PpoConfig& cfg, uint64_t seed,
                          int threads) {
  cfg.validate();
  env_cfg.validate();

  std::filesystem::create_directories(run_dir + "/checkpoints");
  std::ofstream log(run_dir + "/train_phase1.csv", std::ios::trunc);
  require(log.good(), ErrorCode::IoError, "cannot write " + run_dir + "/train_phase1.csv");
  log << "iteration,env_steps,mean_return,mean_episode_len,crash_rate,policy_loss,value_loss,"
         "entropy,clip_frac,approx_kl\n";

  nn::ParamStore store;
  Rng init_rng(derive_seed(seed, {0x101}));
  policy_register(store, pcfg, init_rng);
  nn::Adam adam(store, nn::AdamConfig{cfg.lr, 0.9, 0.999, 1e-8});
  Collector collector(env_cfg, cfg.num_envs, derive_seed(seed, {0x202}));
  Rng shuffle_rng(derive_seed(seed, {0x303}));

  const int steps_per_env = cfg.rollout_steps / cfg.num_envs;
  const int64_t iterations =
      (cfg.total_steps + cfg.rollout_steps - 1) / cfg.rollout_steps;

  Phase1Result result;
  for (int64_t it = 1; it <= iterations; ++it) {
    PolicyEval policy(store, pcfg);
    const Trajectory batch = collector.collect(policy, steps_per_env, threads);
    const UpdateStats s = ppo_update(store, adam, pcfg, cfg, batch, shuffle_rng);
    result.env_steps += batch.steps;

    const double mean_return =
        batch.episodes > 0 ? batch.episode_return_sum / batch.episodes : 0.0;
    const double mean_len =
        batch.episodes > 0 ? static_cast<double>(batch.episode_len_sum) / batch.episodes : 0.0;
    const double crash_rate =
        batch.episodes > 0 ? static_cast<double>(batch.crashes) / batch.episodes : 0.0;
    result.final_crash_rate = crash_rate;

    log << it << ',' << result.env_steps << ',' << mean_return << ',' << mean_len << ','
        << crash_rate << ',' << s.policy_loss << ',' << s.value_loss << ',' << s.entropy << ','
        << s.clip_frac << ',' << s.approx_kl << '\n';
    log.flush();
  }

  nlohmann::json meta;
  meta["kind"] = "phase1";
  meta["seed"] = seed;
  meta["norm"] = norm_meta(collector.env(0).normalizer());
  meta["policy"] = {{"obs_dim", pcfg.obs_dim},     {"act_dim", pcfg.act_dim},
                    {"ext_dim", pcfg.ext_dim},     {"latent_dim", pcfg.latent_dim},
                    {"hidden", pcfg.hidden},       {"mu_hidden", pcfg.mu_hidden},
                    {"logstd_min", pcfg.logstd_min}, {"logstd_max", pcfg.logstd_max}};
  result.checkpoint_prefix = run_dir + "/checkpoints/phase1";
  nn::save_checkpoint(result.checkpoint_prefix, store, meta);
  return result;
}

}  // namespace ftc
