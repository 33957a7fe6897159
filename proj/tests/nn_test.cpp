#include <cmath>
#include <vector>

#include "core/nn/adam.hpp"
#include "core/nn/layers.hpp"
#include "core/nn/tape.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace ftc;
using namespace ftc::nn;
using namespace ftc_test;

namespace {

ParamStore mlp_store(const MlpSpec& spec, uint64_t seed) {
  ParamStore s;
  Rng rng(seed);
  mlp_register(s, "net", spec, rng);
  return s;
}

}  // namespace

TEST_CASE("mlp: zero weights and biases give zero output") {
  MlpSpec spec{{3, 4, 2}};
  ParamStore s = mlp_store(spec, 1);
  for (int i = 0; i < s.count(); ++i) s.entry(i).value.fill(0.0f);
  TypedStore<float> ps(s);
  const float in[3] = {0.7f, -1.3f, 2.0f};
  float out[2] = {9.0f, 9.0f};
  mlp_eval<float>(ps, "net", spec, in, 1, out);
  CHECK(out[0] == 0.0f);
  CHECK(out[1] == 0.0f);
}

TEST_CASE("mlp: single tanh unit matches tanh(w*x + b)") {
  MlpSpec spec{{1, 1, 1}};
  ParamStore s = mlp_store(spec, 2);
  s.value("net.l0.w").data = {0.8f};
  s.value("net.l0.b").data = {-0.1f};
  s.value("net.l1.w").data = {1.0f};
  s.value("net.l1.b").data = {0.0f};
  TypedStore<float> ps(s);
  const float in = 0.5f;
  float out = 0.0f;
  mlp_eval<float>(ps, "net", spec, &in, 1, &out);
  CHECK(out == doctest::Approx(std::tanh(0.8f * 0.5f - 0.1f)).epsilon(1e-6));
}

TEST_CASE("mlp: two-layer forward matches a hand-rolled oracle") {
  MlpSpec spec{{3, 5, 2}};
  ParamStore s = mlp_store(spec, 3);
  TypedStore<double> ps(s);
  Rng rng(77);
  for (int trial = 0; trial < 10; ++trial) {
    double in[3];
    for (double& v : in) v = rng.uniform(-2.0, 2.0);
    double out[2];
    mlp_eval<double>(ps, "net", spec, in, 1, out);

    // oracle: explicit loops over the stored tensors
    const auto& w0 = ps.vec("net.l0.w");
    const auto& b0 = ps.vec("net.l0.b");
    const auto& w1 = ps.vec("net.l1.w");
    const auto& b1 = ps.vec("net.l1.b");
    double h[5];
    for (int j = 0; j < 5; ++j) {
      double a = b0[j];
      for (int i = 0; i < 3; ++i) a += in[i] * w0[i * 5 + j];
      h[j] = std::tanh(a);
    }
    for (int k = 0; k < 2; ++k) {
      double a = b1[k];
      for (int j = 0; j < 5; ++j) a += h[j] * w1[j * 2 + k];
      CHECK(out[k] == doctest::Approx(a).epsilon(1e-6));
    }
  }
}

TEST_CASE("tape and plain mlp forward agree bitwise") {
  MlpSpec spec{{4, 8, 3}};
  ParamStore s = mlp_store(spec, 4);
  Rng rng(5);
  Tensor x = random_tensor(3, 4, rng);

  Tape tape(&s);
  const auto y = mlp_apply(tape, "net", spec, tape.constant(x));

  TypedStore<float> ps(s);
  std::vector<float> out(3 * 3);
  mlp_eval<float>(ps, "net", spec, x.data.data(), 3, out.data());
  for (int i = 0; i < 9; ++i) CHECK(tape.value(y).data[i] == out[i]);
}

TEST_CASE("attention: uniform logits average the value rows") {
  // q and k zero -> all logits equal -> softmax uniform -> output = mean(V)
  const int L = 4, D = 2;
  Tape tape;
  Tensor q({L, D}), k({L, D}), v({L, D});
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < D; ++j) v.at(i, j) = static_cast<float>(i * 10 + j);
  const auto out = tape.multi_head_attention(tape.constant(q), tape.constant(k),
                                             tape.constant(v), 1, 1, L, {L});
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < D; ++j) {
      double mean = 0.0;
      for (int r = 0; r < L; ++r) mean += v.at(r, j);
      mean /= L;
      CHECK(tape.value(out).at(i, j) == doctest::Approx(mean).epsilon(1e-6));
    }
}

TEST_CASE("attention: a dominant logit selects its value row") {
  // one key aligned with the query and scaled so the logit gap is > 50
  const int L = 3, D = 4;
  Tape tape;
  Tensor q({L, D}), k({L, D}), v({L, D});
  for (int j = 0; j < D; ++j) q.at(0, j) = 10.0f;
  for (int j = 0; j < D; ++j) k.at(1, j) = 10.0f;  // logit(0,1) = 400/sqrt(4) = 200
  Rng rng(9);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < D; ++j) v.at(i, j) = static_cast<float>(rng.uniform(-1.0, 1.0));
  const auto out = tape.multi_head_attention(tape.constant(q), tape.constant(k),
                                             tape.constant(v), 1, 1, L, {L});
  for (int j = 0; j < D; ++j)
    CHECK(tape.value(out).at(0, j) == doctest::Approx(v.at(1, j)).epsilon(1e-6));
}

TEST_CASE("attention: two-token single-head example against hand arithmetic") {
  const int L = 2, D = 2;
  Tape tape;
  Tensor q({L, D}, {1.0f, 0.0f, 0.0f, 1.0f});
  Tensor k({L, D}, {1.0f, 0.0f, 0.0f, 1.0f});
  Tensor v({L, D}, {1.0f, 2.0f, 3.0f, 4.0f});
  const auto out = tape.multi_head_attention(tape.constant(q), tape.constant(k),
                                             tape.constant(v), 1, 1, L, {L});
  // logits row 0: (q0.k0, q0.k1)/sqrt(2) = (1,0)/sqrt(2)
  const double a = 1.0 / std::sqrt(2.0);
  const double p00 = std::exp(a) / (std::exp(a) + 1.0);
  const double p01 = 1.0 - p00;
  CHECK(tape.value(out).at(0, 0) == doctest::Approx(p00 * 1.0 + p01 * 3.0).epsilon(1e-6));
  CHECK(tape.value(out).at(0, 1) == doctest::Approx(p00 * 2.0 + p01 * 4.0).epsilon(1e-6));
  // row 1 is symmetric
  CHECK(tape.value(out).at(1, 0) == doctest::Approx(p01 * 1.0 + p00 * 3.0).epsilon(1e-6));
  CHECK(tape.value(out).at(1, 1) == doctest::Approx(p01 * 2.0 + p00 * 4.0).epsilon(1e-6));
}

TEST_CASE("attention: softmax rows sum to one (all-ones values)") {
  // with V = 1 every output element equals its softmax row sum
  Rng rng(123);
  for (int trial = 0; trial < 5; ++trial) {
    const int L = 6, D = 4, heads = 2, batch = 2;
    Tensor q = random_tensor(batch * L, D, rng, -3.0, 3.0);
    Tensor k = random_tensor(batch * L, D, rng, -3.0, 3.0);
    Tensor v = Tensor::full({batch * L, D}, 1.0f);
    std::vector<int> valid = {3, 6};
    Tape tape;
    const auto out = tape.multi_head_attention(tape.constant(q), tape.constant(k),
                                               tape.constant(v), heads, batch, L, valid);
    for (int b = 0; b < batch; ++b)
      for (int i = 0; i < valid[b]; ++i)
        for (int j = 0; j < D; ++j)
          CHECK(std::abs(tape.value(out).at(b * L + i, j) - 1.0f) < 1e-6f);
  }
}

TEST_CASE("conv1d: zero weights give zero output") {
  std::vector<float> w(4 * 3 * 2, 0.0f), b(4, 0.0f);
  std::vector<float> x(10 * 3, 1.5f), out(10 * 4, 9.0f);
  conv1d_eval<float>(w, b, x.data(), 10, 3, 4, 2, 1, out.data());
  for (float v : out) CHECK(v == 0.0f);
}

TEST_CASE("conv1d: impulse kernel reproduces the shifted input") {
  // kernel that picks lag=1 of channel 0 -> out[t] = x[t-1]
  const int len = 8, kernel = 3;
  std::vector<float> w(1 * 1 * kernel, 0.0f), b(1, 0.0f);
  w[1] = 1.0f;  // lag 1
  std::vector<float> x(len), out(len);
  for (int t = 0; t < len; ++t) x[t] = static_cast<float>(t + 1);
  conv1d_eval<float>(w, b, x.data(), len, 1, 1, kernel, 1, out.data());
  CHECK(out[0] == 0.0f);  // t-1 < 0 contributes nothing
  for (int t = 1; t < len; ++t) CHECK(out[t] == x[t - 1]);
}

TEST_CASE("conv1d: random case matches a sliding-window oracle") {
  const int len = 9, in_ch = 3, out_ch = 4, kernel = 3, stride = 2;
  Rng rng(31);
  std::vector<float> w(out_ch * in_ch * kernel), b(out_ch), x(len * in_ch);
  for (auto& v : w) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (auto& v : b) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (auto& v : x) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  const int out_len = conv_out_len(len, stride);
  std::vector<float> out(out_len * out_ch);
  conv1d_eval<float>(w, b, x.data(), len, in_ch, out_ch, kernel, stride, out.data());
  for (int to = 0; to < out_len; ++to)
    for (int co = 0; co < out_ch; ++co) {
      double acc = b[co];
      for (int dt = 0; dt < kernel; ++dt) {
        const int ti = to * stride - dt;
        if (ti < 0) continue;
        for (int ci = 0; ci < in_ch; ++ci)
          acc += static_cast<double>(w[(co * in_ch + ci) * kernel + dt]) * x[ti * in_ch + ci];
      }
      CHECK(out[to * out_ch + co] == doctest::Approx(acc).epsilon(1e-6));
    }
}

TEST_CASE("tape conv1d matches plain conv1d bitwise") {
  const int len = 10, in_ch = 3, out_ch = 5, kernel = 4, stride = 2, batch = 2;
  Rng rng(32);
  ParamStore s;
  s.add("w", random_tensor(out_ch, in_ch * kernel, rng));
  s.add("b", random_tensor(1, out_ch, rng));
  Tensor x = random_tensor(batch * len, in_ch, rng);
  Tape tape(&s);
  const auto y = tape.conv1d_causal(tape.constant(x), tape.param("w"), tape.param("b"), batch,
                                    len, in_ch, out_ch, kernel, stride);
  const int out_len = conv_out_len(len, stride);
  for (int bdx = 0; bdx < batch; ++bdx) {
    std::vector<float> out(out_len * out_ch);
    conv1d_eval<float>(s.value("w").data, s.value("b").data,
                       x.data.data() + static_cast<int64_t>(bdx) * len * in_ch, len, in_ch,
                       out_ch, kernel, stride, out.data());
    for (int i = 0; i < out_len * out_ch; ++i)
      CHECK(tape.value(y).data[bdx * out_len * out_ch + i] == out[i]);
  }
}

TEST_CASE("layer norm: rows come out zero-mean unit-variance before the affine") {
  Rng rng(41);
  std::vector<float> g(6, 1.0f), b(6, 0.0f);
  std::vector<float> x(3 * 6);
  for (auto& v : x) v = static_cast<float>(rng.uniform(-4.0, 4.0));
  layer_norm_eval<float>(g, b, x.data(), 3, 6);
  for (int i = 0; i < 3; ++i) {
    double mean = 0.0, var = 0.0;
    for (int j = 0; j < 6; ++j) mean += x[i * 6 + j];
    mean /= 6;
    for (int j = 0; j < 6; ++j) var += (x[i * 6 + j] - mean) * (x[i * 6 + j] - mean);
    var /= 6;
    CHECK(std::abs(mean) < 1e-5);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("backward: d(sum of params)/dparam is all ones") {
  MlpSpec spec{{3, 4, 2}};
  ParamStore s = mlp_store(spec, 6);
  Tape tape(&s);
  Tape::NodeId total = tape.sum_all(tape.param("net.l0.w"));
  total = tape.add(total, tape.sum_all(tape.param("net.l0.b")));
  total = tape.add(total, tape.sum_all(tape.param("net.l1.w")));
  total = tape.add(total, tape.sum_all(tape.param("net.l1.b")));
  tape.backward(total);
  for (int i = 0; i < s.count(); ++i)
    for (float gv : s.entry(i).grad.data) CHECK(gv == 1.0f);
}

TEST_CASE("backward: d/dW of |Wx|^2 equals 2(Wx)x^T") {
  const int m = 3, n = 4;
  ParamStore s;
  Rng rng(51);
  s.add("w", random_tensor(n, m, rng));  // y = x W, x is 1 x n
  Tensor x = random_tensor(1, n, rng);
  Tape tape(&s);
  const auto y = tape.matmul(tape.constant(x), tape.param("w"));
  tape.backward(tape.sum_all(tape.square(y)));

  std::vector<double> yv(m, 0.0);
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < n; ++i) yv[j] += x.data[i] * s.value("w").at(i, j);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      CHECK(s.grad("w").at(i, j) == doctest::Approx(2.0 * yv[j] * x.data[i]).epsilon(1e-5));
}

TEST_CASE("gradients match central finite differences (mlp)") {
  auto h = MlpHarness::make({10, 16, 8}, 3, 1001);
  ParamStore s;
  h.register_params(s, 1001);
  const auto rep = fd_check(
      s, [&](Tape& t) { return h.build(t); },
      [&](const ParamStore& st) { return h.loss(st); }, 1 << 20);
  CHECK(rep.checked >= 200);
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("gradients match central finite differences (transformer)") {
  auto h = TransformerHarness::make(2002);
  ParamStore s;
  h.register_params(s, 2002);
  const auto rep = fd_check(
      s, [&](Tape& t) { return h.build(t); },
      [&](const ParamStore& st) { return h.loss(st); }, 1 << 20);
  CHECK(rep.checked >= 200);
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("gradients match central finite differences (cnn)") {
  auto h = CnnHarness::make(3003);
  ParamStore s;
  h.register_params(s, 3003);
  const auto rep = fd_check(
      s, [&](Tape& t) { return h.build(t); },
      [&](const ParamStore& st) { return h.loss(st); }, 1 << 20);
  CHECK(rep.checked >= 200);
  CHECK(rep.max_rel_err < 1e-3);
}

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  ParamStore s;
  Rng rng(61);
  s.add("w", random_tensor(4, 4, rng));
  const std::vector<float> before = s.value("w").data;
  Adam adam(s, AdamConfig{});
  s.zero_grads();
  adam.step(s);
  CHECK(s.value("w").data == before);
}

TEST_CASE("adam: first step moves by -lr * g / (|g| + eps)") {
  ParamStore s;
  s.add("w", Tensor::full({1, 3}, 0.5f));
  AdamConfig cfg;
  cfg.lr = 1e-3;
  Adam adam(s, cfg);
  s.grad("w").fill(1.0f);
  adam.step(s);
  // bias-corrected m-hat = g, v-hat = g^2 -> step = lr * g / (|g| + eps)
  const double expect = 0.5 - 1e-3 * (1.0 / (1.0 + 1e-8));
  for (float v : s.value("w").data) CHECK(v == doctest::Approx(expect).epsilon(1e-7));
}

TEST_CASE("adam: constant gradient drives the step size toward lr") {
  ParamStore s;
  s.add("w", Tensor::scalar(0.0f));
  AdamConfig cfg;
  cfg.lr = 0.01;
  Adam adam(s, cfg);
  float prev = 0.0f;
  double step = 0.0;
  for (int i = 0; i < 200; ++i) {
    s.zero_grads();
    s.grad("w").fill(2.0f);
    adam.step(s);
    step = std::abs(s.value("w").data[0] - prev);
    prev = s.value("w").data[0];
  }
  CHECK(step == doctest::Approx(cfg.lr).epsilon(1e-3));
}

TEST_CASE("adam: active set leaves frozen entries untouched") {
  ParamStore s;
  Rng rng(62);
  s.add("a.w", random_tensor(2, 2, rng));
  s.add("b.w", random_tensor(2, 2, rng));
  const std::vector<float> frozen = s.value("a.w").data;
  Adam adam(s, AdamConfig{}, entries_with_prefix(s, "b."));
  for (int i = 0; i < 3; ++i) {
    s.zero_grads();
    s.grad("a.w").fill(1.0f);
    s.grad("b.w").fill(1.0f);
    adam.step(s);
  }
  CHECK(s.value("a.w").data == frozen);
  CHECK(s.value("b.w").data != frozen);
}

TEST_CASE("grad clip: scales the global norm down to the cap") {
  ParamStore s;
  s.add("w", Tensor::full({1, 4}, 0.0f));
  s.grad("w").fill(3.0f);  // norm = 6
  const double pre = clip_grad_norm(s, 1.5);
  CHECK(pre == doctest::Approx(6.0).epsilon(1e-9));
  double norm = 0.0;
  for (float g : s.grad("w").data) norm += static_cast<double>(g) * g;
  CHECK(std::sqrt(norm) == doctest::Approx(1.5).epsilon(1e-6));
}
