#include <cmath>
#include <cstring>
#include <filesystem>
#include <vector>

#include "core/adaptation.hpp"
#include "core/nn/checkpoint.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace ftc;
using namespace ftc_test;

namespace {

nn::TransformerConfig tiny_transformer() {
  nn::TransformerConfig cfg;
  cfg.model_dim = 8;
  cfg.num_heads = 2;
  cfg.num_layers = 1;
  cfg.feedforward_dim = 16;
  cfg.history_len = 6;
  cfg.input_dim = 5;
  cfg.latent_dim = 3;
  return cfg;
}

}  // namespace

TEST_CASE("history buffer: keeps the newest rows in order") {
  HistoryBuffer h(4);
  CHECK(h.valid_len() == 0);
  float obs[kObservationDim], act[kActionDim];
  for (int step = 0; step < 6; ++step) {
    for (int i = 0; i < kObservationDim; ++i) obs[i] = static_cast<float>(step);
    for (int i = 0; i < kActionDim; ++i) act[i] = static_cast<float>(step) + 0.5f;
    h.push(obs, act);
  }
  CHECK(h.valid_len() == 4);
  std::vector<float> rows(4 * HistoryBuffer::kRowDim);
  h.materialize(rows.data(), 4);
  // oldest -> newest: steps 2, 3, 4, 5
  for (int r = 0; r < 4; ++r) {
    CHECK(rows[r * HistoryBuffer::kRowDim] == static_cast<float>(r + 2));
    CHECK(rows[r * HistoryBuffer::kRowDim + kObservationDim] == static_cast<float>(r + 2) + 0.5f);
  }
  h.clear();
  CHECK(h.valid_len() == 0);
}

TEST_CASE("history buffer: rows beyond valid_len are zero-filled") {
  HistoryBuffer h(5);
  float obs[kObservationDim], act[kActionDim];
  for (int i = 0; i < kObservationDim; ++i) obs[i] = 1.0f;
  for (int i = 0; i < kActionDim; ++i) act[i] = 2.0f;
  h.push(obs, act);
  h.push(obs, act);
  std::vector<float> rows(5 * HistoryBuffer::kRowDim, -9.0f);
  h.materialize(rows.data(), 5);
  for (int r = 2; r < 5; ++r)
    for (int c = 0; c < HistoryBuffer::kRowDim; ++c)
      CHECK(rows[r * HistoryBuffer::kRowDim + c] == 0.0f);
}

TEST_CASE("transformer: masked rows cannot influence the latent (bitwise)") {
  auto cfg = tiny_transformer();
  nn::ParamStore s;
  Rng rng(101);
  nn::transformer_register(s, "phi", cfg, rng);

  const int batch = 2, H = cfg.history_len;
  std::vector<int> valid = {2, 5};
  Rng drng(102);
  nn::Tensor x({batch * H, cfg.input_dim});
  for (int b = 0; b < batch; ++b)
    for (int i = 0; i < valid[b]; ++i)
      for (int j = 0; j < cfg.input_dim; ++j)
        x.at(b * H + i, j) = static_cast<float>(drng.uniform(-1.0, 1.0));

  nn::Tape t1(&s);
  const auto z1 = t1.value(nn::transformer_apply(t1, "phi", cfg, t1.constant(x), batch, valid));

  // poison every masked row with garbage
  nn::Tensor noisy = x;
  for (int b = 0; b < batch; ++b)
    for (int i = valid[b]; i < H; ++i)
      for (int j = 0; j < cfg.input_dim; ++j) noisy.at(b * H + i, j) = 1.0e6f * (j % 2 ? -3.7f : 2.9f);
  nn::Tape t2(&s);
  const auto z2 =
      t2.value(nn::transformer_apply(t2, "phi", cfg, t2.constant(noisy), batch, valid));

  REQUIRE(z1.data.size() == z2.data.size());
  CHECK(std::memcmp(z1.data.data(), z2.data.data(), z1.data.size() * sizeof(float)) == 0);
}

TEST_CASE("cnn: masked rows cannot influence the latent (bitwise)") {
  nn::CnnConfig cfg;
  cfg.channels = 6;
  cfg.kernel = 3;
  cfg.history_len = 8;
  cfg.input_dim = 5;
  cfg.latent_dim = 3;
  nn::ParamStore s;
  Rng rng(103);
  nn::cnn_register(s, "phi", cfg, rng);

  const int batch = 2, H = cfg.history_len;
  std::vector<int> valid = {3, 6};
  Rng drng(104);
  nn::Tensor x({batch * H, cfg.input_dim});
  for (int b = 0; b < batch; ++b)
    for (int i = 0; i < valid[b]; ++i)
      for (int j = 0; j < cfg.input_dim; ++j)
        x.at(b * H + i, j) = static_cast<float>(drng.uniform(-1.0, 1.0));

  nn::Tape t1(&s);
  const auto z1 = t1.value(nn::cnn_apply(t1, "phi", cfg, t1.constant(x), batch, valid));
  nn::Tensor noisy = x;
  for (int b = 0; b < batch; ++b)
    for (int i = valid[b]; i < H; ++i)
      for (int j = 0; j < cfg.input_dim; ++j) noisy.at(b * H + i, j) = -4.0e5f;
  nn::Tape t2(&s);
  const auto z2 = t2.value(nn::cnn_apply(t2, "phi", cfg, t2.constant(noisy), batch, valid));
  CHECK(std::memcmp(z1.data.data(), z2.data.data(), z1.data.size() * sizeof(float)) == 0);
}

TEST_CASE("transformer: batched tape forward matches the single-window eval") {
  auto cfg = tiny_transformer();
  nn::ParamStore s;
  Rng rng(105);
  nn::transformer_register(s, "phi", cfg, rng);

  const int batch = 3, H = cfg.history_len;
  std::vector<int> valid = {1, 4, 6};
  Rng drng(106);
  nn::Tensor x({batch * H, cfg.input_dim});
  for (int b = 0; b < batch; ++b)
    for (int i = 0; i < valid[b]; ++i)
      for (int j = 0; j < cfg.input_dim; ++j)
        x.at(b * H + i, j) = static_cast<float>(drng.uniform(-1.0, 1.0));

  nn::Tape tape(&s);
  const auto z = tape.value(nn::transformer_apply(tape, "phi", cfg, tape.constant(x), batch, valid));

  nn::TypedStore<float> ps(s);
  for (int b = 0; b < batch; ++b) {
    std::vector<float> seq(static_cast<size_t>(valid[b]) * cfg.input_dim);
    for (int i = 0; i < valid[b]; ++i)
      for (int j = 0; j < cfg.input_dim; ++j)
        seq[static_cast<size_t>(i) * cfg.input_dim + j] = x.at(b * H + i, j);
    std::vector<float> zb(cfg.latent_dim);
    nn::transformer_eval<float>(ps, "phi", cfg, seq.data(), valid[b], zb.data());
    for (int j = 0; j < cfg.latent_dim; ++j)
      CHECK(z.at(b, j) == doctest::Approx(zb[j]).epsilon(1e-6));
  }
}

TEST_CASE("cnn: batched tape forward matches the single-window eval") {
  nn::CnnConfig cfg;
  cfg.channels = 6;
  cfg.kernel = 3;
  cfg.history_len = 8;
  cfg.input_dim = 5;
  cfg.latent_dim = 3;
  nn::ParamStore s;
  Rng rng(107);
  nn::cnn_register(s, "phi", cfg, rng);

  const int batch = 2, H = cfg.history_len;
  std::vector<int> valid = {4, 7};
  Rng drng(108);
  nn::Tensor x({batch * H, cfg.input_dim});
  for (int b = 0; b < batch; ++b)
    for (int i = 0; i < valid[b]; ++i)
      for (int j = 0; j < cfg.input_dim; ++j)
        x.at(b * H + i, j) = static_cast<float>(drng.uniform(-1.0, 1.0));

  nn::Tape tape(&s);
  const auto z = tape.value(nn::cnn_apply(tape, "phi", cfg, tape.constant(x), batch, valid));
  nn::TypedStore<float> ps(s);
  for (int b = 0; b < batch; ++b) {
    std::vector<float> seq(static_cast<size_t>(valid[b]) * cfg.input_dim);
    for (int i = 0; i < valid[b]; ++i)
      for (int j = 0; j < cfg.input_dim; ++j)
        seq[static_cast<size_t>(i) * cfg.input_dim + j] = x.at(b * H + i, j);
    std::vector<float> zb(cfg.latent_dim);
    nn::cnn_eval<float>(ps, "phi", cfg, seq.data(), valid[b], zb.data());
    for (int j = 0; j < cfg.latent_dim; ++j)
      CHECK(z.at(b, j) == doctest::Approx(zb[j]).epsilon(1e-6));
  }
}

TEST_CASE("transformer: with zero position embedding, identical rows reduce to one row") {
  auto cfg = tiny_transformer();
  nn::ParamStore s;
  Rng rng(109);
  nn::transformer_register(s, "phi", cfg, rng);
  s.value("phi.posemb").fill(0.0f);

  Rng drng(110);
  std::vector<float> row(cfg.input_dim);
  for (auto& v : row) v = static_cast<float>(drng.uniform(-1.0, 1.0));

  nn::TypedStore<float> ps(s);
  std::vector<float> full(static_cast<size_t>(cfg.history_len) * cfg.input_dim);
  for (int i = 0; i < cfg.history_len; ++i)
    std::copy(row.begin(), row.end(), full.begin() + static_cast<size_t>(i) * cfg.input_dim);

  std::vector<float> z_full(cfg.latent_dim), z_one(cfg.latent_dim);
  nn::transformer_eval<float>(ps, "phi", cfg, full.data(), cfg.history_len, z_full.data());
  nn::transformer_eval<float>(ps, "phi", cfg, row.data(), 1, z_one.data());
  for (int j = 0; j < cfg.latent_dim; ++j)
    CHECK(z_full[j] == doctest::Approx(z_one[j]).epsilon(1e-5));
}

TEST_CASE("infer_latent: consumes the ring buffer like the batched path") {
  AdaptationConfig acfg;
  acfg.encoder = EncoderKind::Transformer;
  acfg.transformer = tiny_transformer();
  acfg.transformer.input_dim = HistoryBuffer::kRowDim;  // ring rows are 26 wide

  nn::ParamStore s;
  Rng rng(111);
  adaptation_register(s, acfg, rng);
  nn::TypedStore<float> ps(s);

  HistoryBuffer hist(acfg.history_len());
  float z[8] = {0};
  CHECK_THROWS_AS(infer_latent(ps, acfg, hist, z), Error);

  Rng drng(112);
  float obs[kObservationDim], act[kActionDim];
  for (int step = 0; step < 3; ++step) {
    for (auto& v : obs) v = static_cast<float>(drng.uniform(-1.0, 1.0));
    for (auto& v : act) v = static_cast<float>(drng.uniform(0.0, 1.0));
    hist.push(obs, act);
  }
  infer_latent(ps, acfg, hist, z);

  std::vector<float> rows(static_cast<size_t>(3) * HistoryBuffer::kRowDim);
  hist.materialize(rows.data(), 3);
  std::vector<float> expect(acfg.latent_dim());
  nn::transformer_eval<float>(ps, "phi", acfg.transformer, rows.data(), 3, expect.data());
  for (int j = 0; j < acfg.latent_dim(); ++j) CHECK(z[j] == expect[j]);
}

TEST_CASE("tiny regression: the history encoder fits a constant target") {
  auto cfg = tiny_transformer();
  nn::ParamStore s;
  Rng rng(113);
  nn::transformer_register(s, "phi", cfg, rng);

  const int batch = 8, H = cfg.history_len;
  std::vector<int> valid(batch);
  Rng drng(114);
  nn::Tensor x({batch * H, cfg.input_dim});
  for (int b = 0; b < batch; ++b) {
    valid[b] = 1 + static_cast<int>(drng.uniform_index(H));
    for (int i = 0; i < valid[b]; ++i)
      for (int j = 0; j < cfg.input_dim; ++j)
        x.at(b * H + i, j) = static_cast<float>(drng.uniform(-1.0, 1.0));
  }
  nn::Tensor target({batch, cfg.latent_dim});
  for (int b = 0; b < batch; ++b)
    for (int j = 0; j < cfg.latent_dim; ++j) target.at(b, j) = 0.3f * (j + 1);

  nn::Adam adam(s, nn::AdamConfig{1e-2});
  double first = 0.0, last = 0.0;
  for (int step = 0; step < 300; ++step) {
    s.zero_grads();
    nn::Tape tape(&s);
    const auto z = nn::transformer_apply(tape, "phi", cfg, tape.constant(x), batch, valid);
    const auto loss = tape.mean_all(tape.square(tape.sub(z, tape.constant(target))));
    tape.backward(loss);
    adam.step(s);
    last = tape.value(loss).data[0];
    if (step == 0) first = last;
  }
  CHECK(last < 1e-3);
  CHECK(last < first / 100.0);
}

TEST_CASE("phase-2 training freezes the policy and learns a history encoder") {
  TempDir dir("phase2");
  EnvConfig env_cfg;
  env_cfg.episode_length_s = 2.0;
  PolicyConfig pcfg;
  PpoConfig p1;
  p1.total_steps = 1024;
  p1.rollout_steps = 512;
  p1.num_envs = 2;
  p1.epochs = 2;
  p1.minibatch = 128;
  const Phase1Result r1 =
      train_phase1(dir.str() + "/p1", env_cfg, pcfg, p1, 7, 1);

  AdaptationConfig acfg;
  acfg.encoder = EncoderKind::Cnn;
  acfg.cnn.channels = 8;
  acfg.cnn.kernel = 3;
  acfg.cnn.history_len = 10;
  acfg.total_steps = 1200;
  acfg.steps_per_iter = 400;
  acfg.num_envs = 2;
  acfg.batch_windows = 32;
  acfg.window_stride = 5;
  acfg.replay_capacity = 500;
  acfg.holdout_capacity = 100;
  const Phase2Result r2 =
      train_phase2(dir.str() + "/p2", r1.checkpoint_prefix, env_cfg, acfg, 8, 1);

  // pi, v, mu byte-identical to phase 1; phi present only in phase 2
  nn::ParamStore s1, s2;
  nn::load_checkpoint(r1.checkpoint_prefix, s1);
  nn::load_checkpoint(r2.checkpoint_prefix, s2);
  for (int i = 0; i < s1.count(); ++i) {
    const std::string& name = s1.entry(i).name;
    REQUIRE(nn::tensors_identical(s1, s2, name));
  }
  bool has_phi = false;
  for (int i = 0; i < s2.count(); ++i)
    has_phi |= s2.entry(i).name.rfind("phi.", 0) == 0;
  CHECK(has_phi);
  CHECK(r2.env_steps >= acfg.total_steps);
  CHECK(std::isfinite(r2.final_holdout_mse));
  CHECK(std::filesystem::exists(dir.path / "p2" / "train_phase2_cnn.csv"));
}
