#include "core/adaptation.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include "core/nn/checkpoint.hpp"
#include "core/nn/tape.hpp"

namespace ftc {

const char* encoder_name(EncoderKind k) {
  return k == EncoderKind::Transformer ? "transformer" : "cnn";
}

void AdaptationConfig::validate() const {
  require(total_steps >= 1, ErrorCode::InvalidConfig, "adaptation.total_steps must be >= 1");
  require(lr > 0.0, ErrorCode::InvalidConfig, "adaptation.lr must be > 0");
  require(batch_windows >= 1, ErrorCode::InvalidConfig, "adaptation.batch_windows must be >= 1");
  require(window_stride >= 1, ErrorCode::InvalidConfig, "adaptation.window_stride must be >= 1");
  require(num_envs >= 1, ErrorCode::InvalidConfig, "adaptation.num_envs must be >= 1");
  require(steps_per_iter >= num_envs && steps_per_iter % num_envs == 0, ErrorCode::InvalidConfig,
          "adaptation.steps_per_iter must be a positive multiple of num_envs");
  require(updates_per_iter >= 1, ErrorCode::InvalidConfig,
          "adaptation.updates_per_iter must be >= 1");
  require(replay_capacity >= batch_windows, ErrorCode::InvalidConfig,
          "adaptation.replay_capacity must hold at least one batch");
  require(holdout_every >= 2, ErrorCode::InvalidConfig, "adaptation.holdout_every must be >= 2");
  require(holdout_capacity >= 1, ErrorCode::InvalidConfig,
          "adaptation.holdout_capacity must be >= 1");
  require(max_grad_norm > 0.0, ErrorCode::InvalidConfig,
          "adaptation.max_grad_norm must be > 0");
  if (encoder == EncoderKind::Transformer) {
    require(transformer.input_dim == HistoryBuffer::kRowDim, ErrorCode::InvalidConfig,
            "transformer input_dim must equal observation+action size");
    require(transformer.model_dim % transformer.num_heads == 0, ErrorCode::InvalidConfig,
            "transformer model_dim must be divisible by num_heads");
    require(transformer.history_len >= 1, ErrorCode::InvalidConfig,
            "transformer history_len must be >= 1");
  } else {
    require(cnn.input_dim == HistoryBuffer::kRowDim, ErrorCode::InvalidConfig,
            "cnn input_dim must equal observation+action size");
    require(cnn.history_len >= 1, ErrorCode::InvalidConfig, "cnn history_len must be >= 1");
  }
}

void adaptation_register(nn::ParamStore& store, const AdaptationConfig& cfg, Rng& rng) {
  if (cfg.encoder == EncoderKind::Transformer)
    nn::transformer_register(store, "phi", cfg.transformer, rng);
  else
    nn::cnn_register(store, "phi", cfg.cnn, rng);
}

void infer_latent(const nn::TypedStore<float>& ps, const AdaptationConfig& cfg,
                  const HistoryBuffer& hist, float* z_out) {
  require(hist.valid_len() >= 1, ErrorCode::EmptyHistory,
          "infer_latent: history is empty; use the zero latent before the first step");
  const int valid = hist.valid_len();
  std::vector<float> window(static_cast<size_t>(valid) * HistoryBuffer::kRowDim);
  hist.materialize(window.data(), valid);
  if (cfg.encoder == EncoderKind::Transformer)
    nn::transformer_eval(ps, "phi", cfg.transformer, window.data(), valid, z_out);
  else
    nn::cnn_eval(ps, "phi", cfg.cnn, window.data(), valid, z_out);
}

namespace {

struct Window {
  std::vector<float> x;  // history_len x 26, zero-padded
  int valid = 0;
  std::array<float, 8> target{};
};

struct Phase2Batch {
  nn::Tensor x;
  std::vector<int> valid;
  nn::Tensor target;
  int count = 0;
};

Phase2Batch assemble(const std::vector<Window>& pool, const std::vector<int>& pick, int H,
                     int latent_dim) {
  Phase2Batch b;
  b.count = static_cast<int>(pick.size());
  b.x = nn::Tensor({b.count * H, HistoryBuffer::kRowDim});
  b.target = nn::Tensor({b.count, latent_dim});
  b.valid.resize(pick.size());
  for (size_t i = 0; i < pick.size(); ++i) {
    const Window& w = pool[pick[i]];
    std::copy(w.x.begin(), w.x.end(),
              b.x.data.begin() + static_cast<int64_t>(i) * H * HistoryBuffer::kRowDim);
    b.valid[i] = w.valid;
    std::copy(w.target.begin(), w.target.begin() + latent_dim,
              b.target.data.begin() + static_cast<int64_t>(i) * latent_dim);
  }
  return b;
}

// forward MSE; when update is set, also backprop and apply one Adam step on phi
double phi_batch_mse(nn::ParamStore& store, nn::Adam* adam, const AdaptationConfig& cfg,
                     const Phase2Batch& batch, bool update) {
  nn::Tape tape(&store);
  const auto x_c = tape.constant(batch.x);
  const auto t_c = tape.constant(batch.target);
  nn::Tape::NodeId zhat;
  if (cfg.encoder == EncoderKind::Transformer)
    zhat = nn::transformer_apply(tape, "phi", cfg.transformer, x_c, batch.count, batch.valid);
  else
    zhat = nn::cnn_apply(tape, "phi", cfg.cnn, x_c, batch.count, batch.valid);
  const auto loss = tape.mean_all(tape.square(tape.sub(zhat, t_c)));
  const double mse = static_cast<double>(tape.value(loss).data[0]);
  require(std::isfinite(mse), ErrorCode::NonFiniteLoss,
          "phase-2 regression loss is non-finite");
  if (update) {
    store.zero_grads();
    tape.backward(loss);
    nn::clip_grad_norm(store, cfg.max_grad_norm);
    adam->step(store);
  }
  return mse;
}

PolicyConfig policy_from_meta(const nlohmann::json& meta) {
  PolicyConfig p;
  const auto& j = meta.at("policy");
  p.obs_dim = j.at("obs_dim").get<int>();
  p.act_dim = j.at("act_dim").get<int>();
  p.ext_dim = j.at("ext_dim").get<int>();
  p.latent_dim = j.at("latent_dim").get<int>();
  p.hidden = j.at("hidden").get<int>();
  p.mu_hidden = j.at("mu_hidden").get<int>();
  p.logstd_min = j.at("logstd_min").get<float>();
  p.logstd_max = j.at("logstd_max").get<float>();
  return p;
}

}  // namespace

Phase2Result train_phase2(const std::string& run_dir, const std::string& phase1_prefix,
                          const EnvConfig& env_cfg, const AdaptationConfig& acfg,
                          uint64_t seed, int threads) {
  acfg.validate();
  env_cfg.validate();

  nn::ParamStore store;
  nlohmann::json meta = nn::load_checkpoint(phase1_prefix, store);
  require(meta.value("kind", "") == "phase1" || meta.value("kind", "").rfind("phase2", 0) == 0,
          ErrorCode::MissingModel, "phase-2 needs a phase-1 checkpoint");
  const PolicyConfig pcfg = policy_from_meta(meta);
  const ExtrinsicsNormalizer norm = norm_from_meta(meta.at("norm"));

  Rng phi_rng(derive_seed(seed, {0x404}));
  adaptation_register(store, acfg, phi_rng);

  nn::Adam adam(store, nn::AdamConfig{acfg.lr, 0.9, 0.999, 1e-8},
                nn::entries_with_prefix(store, "phi."));
  const PolicyEval policy(store, pcfg);  // pi and mu are frozen from here on

  const std::string enc = encoder_name(acfg.encoder);
  std::filesystem::create_directories(run_dir + "/checkpoints");
  std::ofstream log(run_dir + "/train_phase2_" + enc + ".csv", std::ios::trunc);
  require(log.good(), ErrorCode::IoError, "cannot write phase-2 csv in " + run_dir);
  log << "iteration,env_steps,train_mse,holdout_mse\n";

  const int H = acfg.history_len();
  const int latent = acfg.latent_dim();
  const int steps_per_env = acfg.steps_per_iter / acfg.num_envs;
  const int64_t iterations =
      (acfg.total_steps + acfg.steps_per_iter - 1) / acfg.steps_per_iter;

  // per-env episode streams. Episodes persist across iterations.
  std::vector<Env> envs;
  envs.reserve(acfg.num_envs);
  for (int i = 0; i < acfg.num_envs; ++i)
    envs.emplace_back(env_cfg, derive_seed(seed, {0x505, static_cast<uint64_t>(i)}));
  std::vector<HistoryBuffer> hists(acfg.num_envs, HistoryBuffer(H));
  std::vector<int64_t> env_step_count(acfg.num_envs, 0);
  for (auto& e : envs) e.reset();

  std::vector<Window> replay, holdout;
  replay.reserve(acfg.replay_capacity);
  size_t replay_next = 0;  // FIFO slot once at capacity
  int64_t recorded = 0;
  Rng batch_rng(derive_seed(seed, {0x606}));

  nn::TypedStore<float> phi_ps(store);

  Phase2Result result;
  for (int64_t it = 1; it <= iterations; ++it) {
    // ---- collect ----
    std::vector<std::vector<Window>> fresh(acfg.num_envs);
    auto run_env = [&](int i) {
      Env& env = envs[i];
      HistoryBuffer& hist = hists[i];
      float zhat[8] = {0};
      float obs_f[kObservationDim];
      float ext_f[kExtrinsicsDim];
      for (int t = 0; t < steps_per_env; ++t) {
        {
          const ObsVec o = env.observation();
          for (int j = 0; j < kObservationDim; ++j) obs_f[j] = static_cast<float>(o[j]);
        }
        if (hist.valid_len() == 0)
          std::fill(zhat, zhat + 8, 0.0f);
        else
          infer_latent(phi_ps, acfg, hist, zhat);

        if (env_step_count[i] % acfg.window_stride == 0 && hist.valid_len() >= 1) {
          Window w;
          w.x.resize(static_cast<size_t>(H) * HistoryBuffer::kRowDim);
          hist.materialize(w.x.data(), H);
          w.valid = hist.valid_len();
          const ExtVec e = norm.normalize(env.raw_extrinsics_at(env.time()));
          for (int j = 0; j < kExtrinsicsDim; ++j) ext_f[j] = static_cast<float>(e[j]);
          policy.encode_extrinsics(ext_f, w.target.data());
          fresh[i].push_back(std::move(w));
        }
        env_step_count[i] += 1;

        float action[4];
        policy.mean_action(obs_f, zhat, action);
        MotorCommand cmd;
        for (int j = 0; j < kActionDim; ++j) cmd.u[j] = static_cast<double>(action[j]);
        const Env::StepResult r = env.step(cmd);
        hist.push(obs_f, action);
        if (!r.status.running()) {
          env.reset();
          hist.clear();
        }
      }
    };
    if (threads <= 1 || acfg.num_envs == 1) {
      for (int i = 0; i < acfg.num_envs; ++i) run_env(i);
    } else {
      const int workers = std::min(threads, acfg.num_envs);
      std::vector<std::thread> pool;
      for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w]() {
          for (int i = w; i < acfg.num_envs; i += workers) run_env(i);
        });
      for (auto& t : pool) t.join();
    }
    result.env_steps += acfg.steps_per_iter;

    // merge in env order; every Nth recorded window goes to the holdout set
    for (int i = 0; i < acfg.num_envs; ++i) {
      for (auto& w : fresh[i]) {
        ++recorded;
        if (recorded % acfg.holdout_every == 0) {
          if (static_cast<int>(holdout.size()) < acfg.holdout_capacity)
            holdout.push_back(std::move(w));
          continue;
        }
        if (static_cast<int>(replay.size()) < acfg.replay_capacity) {
          replay.push_back(std::move(w));
        } else {
          replay[replay_next] = std::move(w);
          replay_next = (replay_next + 1) % replay.size();
        }
      }
    }

    // ---- update ----
    double train_mse = 0.0;
    int n_updates = 0;
    if (!replay.empty()) {
      for (int u = 0; u < acfg.updates_per_iter; ++u) {
        std::vector<int> pick(acfg.batch_windows);
        for (auto& p : pick)
          p = static_cast<int>(batch_rng.uniform_index(replay.size()));
        const Phase2Batch b = assemble(replay, pick, H, latent);
        train_mse += phi_batch_mse(store, &adam, acfg, b, true);
        ++n_updates;
      }
      train_mse /= std::max(1, n_updates);
      phi_ps = nn::TypedStore<float>(store);  // refresh the rollout encoder
    }

    // ---- holdout ----
    double holdout_mse = 0.0;
    if (!holdout.empty()) {
      const int n = std::min<int>(static_cast<int>(holdout.size()), acfg.batch_windows);
      std::vector<int> pick(n);
      for (int i = 0; i < n; ++i) pick[i] = i;  // fixed deterministic slice
      const Phase2Batch b = assemble(holdout, pick, H, latent);
      holdout_mse = phi_batch_mse(store, nullptr, acfg, b, false);
    }

    result.final_train_mse = train_mse;
    log << it << ',' << result.env_steps << ',' << train_mse << ',' << holdout_mse << '\n';
    log.flush();
  }

  // final holdout metrics over the full holdout set
  if (!holdout.empty()) {
    std::vector<int> all(holdout.size());
    for (size_t i = 0; i < holdout.size(); ++i) all[i] = static_cast<int>(i);
    const Phase2Batch b = assemble(holdout, all, H, latent);
    result.final_holdout_mse = phi_batch_mse(store, nullptr, acfg, b, false);

    std::vector<double> mean_t(latent, 0.0);
    for (const auto& w : holdout)
      for (int j = 0; j < latent; ++j) mean_t[j] += static_cast<double>(w.target[j]);
    for (auto& m : mean_t) m /= static_cast<double>(holdout.size());
    double var = 0.0;
    for (const auto& w : holdout)
      for (int j = 0; j < latent; ++j) {
        const double d = static_cast<double>(w.target[j]) - mean_t[j];
        var += d * d;
      }
    var /= static_cast<double>(holdout.size() * latent);
    result.holdout_target_var = var;
    result.r2 = var > 0.0 ? 1.0 - result.final_holdout_mse / var : 0.0;
  }

  meta["kind"] = "phase2";
  meta["encoder"] = enc;
  meta["phase2_seed"] = seed;
  if (acfg.encoder == EncoderKind::Transformer)
    meta["transformer"] = {{"model_dim", acfg.transformer.model_dim},
                           {"num_heads", acfg.transformer.num_heads},
                           {"num_layers", acfg.transformer.num_layers},
                           {"feedforward_dim", acfg.transformer.feedforward_dim},
                           {"history_len", acfg.transformer.history_len},
                           {"input_dim", acfg.transformer.input_dim},
                           {"latent_dim", acfg.transformer.latent_dim}};
  else
    meta["cnn"] = {{"channels", acfg.cnn.channels},
                   {"kernel", acfg.cnn.kernel},
                   {"history_len", acfg.cnn.history_len},
                   {"input_dim", acfg.cnn.input_dim},
                   {"latent_dim", acfg.cnn.latent_dim}};

  result.checkpoint_prefix = run_dir + "/checkpoints/phase2_" + enc;
  nn::save_checkpoint(result.checkpoint_prefix, store, meta);
  return result;
}

}  // namespace ftc
