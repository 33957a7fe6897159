#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "core/nn/kernels.hpp"
#include "core/nn/params.hpp"
#include "core/nn/tape.hpp"

namespace ftc::nn {

// Architecture builders. Each network exists in two forms that must agree
// bit-for-bit at float precision:
//   *_apply   — records the forward pass on a Tape (training)
//   *_eval    — plain forward in element type T (deployment; T=double feeds
//               the finite-difference gradient oracle)
// Parameter names are "<prefix>.<layer>.<tensor>"; registration order fixes
// the checkpoint manifest order.

struct MlpSpec {
  std::vector<int> dims;  // [in, hidden..., out]; tanh on hidden, linear out
};

struct TransformerConfig {
  int model_dim = 64;
  int num_heads = 4;
  int num_layers = 2;
  int feedforward_dim = 128;
  int history_len = 50;
  int input_dim = 26;
  int latent_dim = 8;
};

struct CnnConfig {
  int channels = 64;  // per conv layer; strides fixed at 1, 2, 2
  int kernel = 5;
  int history_len = 50;
  int input_dim = 26;
  int latent_dim = 8;
};

// parameters of one ParamStore cast to T for plain evaluation
template <typename T>
class TypedStore {
 public:
  explicit TypedStore(const ParamStore& s) {
    for (int i = 0; i < s.count(); ++i) {
      const auto& e = s.entry(i);
      auto& slot = map_[e.name];
      slot.first = e.value.shape;
      slot.second.assign(e.value.data.begin(), e.value.data.end());
    }
  }
  const std::vector<T>& vec(const std::string& name) const {
    auto it = map_.find(name);
    require(it != map_.end(), ErrorCode::Internal, "unknown parameter: " + name);
    return it->second.second;
  }
  const Shape& shape(const std::string& name) const {
    auto it = map_.find(name);
    require(it != map_.end(), ErrorCode::Internal, "unknown parameter: " + name);
    return it->second.first;
  }
  bool has(const std::string& name) const { return map_.count(name) != 0; }

 private:
  std::unordered_map<std::string, std::pair<Shape, std::vector<T>>> map_;
};

// ---- registration (draw order = registration order = manifest order) ----
void mlp_register(ParamStore& store, const std::string& prefix, const MlpSpec& spec, Rng& rng);
void transformer_register(ParamStore& store, const std::string& prefix,
                          const TransformerConfig& cfg, Rng& rng);
void cnn_register(ParamStore& store, const std::string& prefix, const CnnConfig& cfg, Rng& rng);

// ---- tape forward ----
Tape::NodeId mlp_apply(Tape& tape, const std::string& prefix, const MlpSpec& spec,
                       Tape::NodeId x);
// x is [batch * history_len, input_dim]; returns [batch, latent_dim]
Tape::NodeId transformer_apply(Tape& tape, const std::string& prefix,
                               const TransformerConfig& cfg, Tape::NodeId x, int batch,
                               const std::vector<int>& valid);
Tape::NodeId cnn_apply(Tape& tape, const std::string& prefix, const CnnConfig& cfg,
                       Tape::NodeId x, int batch, const std::vector<int>& valid);

// number of valid outputs of a causal conv at the given stride
inline int conv_out_len(int in_len, int stride) { return (in_len - 1) / stride + 1; }

// ---- plain forward ----

template <typename T>
void dense_eval(const TypedStore<T>& ps, const std::string& w_name, const std::string& b_name,
                const T* in, int batch, int in_dim, int out_dim, T* out) {
  const auto& w = ps.vec(w_name);
  const auto& b = ps.vec(b_name);
  require(static_cast<int64_t>(w.size()) == static_cast<int64_t>(in_dim) * out_dim &&
              static_cast<int>(b.size()) == out_dim,
          ErrorCode::ShapeMismatch, "dense_eval: parameter shape mismatch for " + w_name);
  gemm(in, w.data(), out, batch, in_dim, out_dim);
  for (int i = 0; i < batch; ++i)
    for (int j = 0; j < out_dim; ++j) out[static_cast<int64_t>(i) * out_dim + j] += b[j];
}

template <typename T>
void mlp_eval(const TypedStore<T>& ps, const std::string& prefix, const MlpSpec& spec,
              const T* in, int batch, T* out) {
  const int n_layers = static_cast<int>(spec.dims.size()) - 1;
  require(n_layers >= 1, ErrorCode::ShapeMismatch, "mlp_eval: need at least one layer");
  std::vector<T> cur(in, in + static_cast<int64_t>(batch) * spec.dims[0]);
  std::vector<T> next;
  for (int l = 0; l < n_layers; ++l) {
    const int din = spec.dims[l], dout = spec.dims[l + 1];
    next.assign(static_cast<int64_t>(batch) * dout, T(0));
    const std::string base = prefix + ".l" + std::to_string(l);
    dense_eval(ps, base + ".w", base + ".b", cur.data(), batch, din, dout, next.data());
    if (l + 1 < n_layers)
      for (auto& v : next) v = std::tanh(v);
    cur.swap(next);
  }
  std::copy(cur.begin(), cur.end(), out);
}

template <typename T>
void layer_norm_eval(const std::vector<T>& g, const std::vector<T>& b, T* x, int rows, int n) {
  constexpr double kEps = 1e-5;
  for (int i = 0; i < rows; ++i) {
    T* row = x + static_cast<int64_t>(i) * n;
    const double mean = sum_acc(row, n) / n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = static_cast<double>(row[j]) - mean;
      var += d * d;
    }
    var /= n;
    const double is = 1.0 / std::sqrt(var + kEps);
    for (int j = 0; j < n; ++j) {
      const T xh = static_cast<T>((static_cast<double>(row[j]) - mean) * is);
      row[j] = xh * g[j] + b[j];
    }
  }
}

// single window of length valid_len (<= history_len); seq is row-major
// valid_len x input_dim; masked positions need not be materialized
template <typename T>
void transformer_eval(const TypedStore<T>& ps, const std::string& prefix,
                      const TransformerConfig& cfg, const T* seq, int valid_len, T* latent) {
  require(valid_len >= 1 && valid_len <= cfg.history_len, ErrorCode::ShapeMismatch,
          "transformer_eval: valid length out of range");
  const int L = valid_len, D = cfg.model_dim, nh = cfg.num_heads, dh = D / nh;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  std::vector<T> h(static_cast<int64_t>(L) * D, T(0));
  dense_eval(ps, prefix + ".embed.w", prefix + ".embed.b", seq, L, cfg.input_dim, D, h.data());
  const auto& pos = ps.vec(prefix + ".posemb");
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < D; ++j) h[static_cast<int64_t>(i) * D + j] += pos[static_cast<int64_t>(i) * D + j];

  std::vector<T> a(h.size()), q(h.size()), k(h.size()), v(h.size()), att(h.size()), o(h.size());
  std::vector<T> prow(L);
  std::vector<T> f(h.size()), ff1(static_cast<int64_t>(L) * cfg.feedforward_dim);
  for (int layer = 0; layer < cfg.num_layers; ++layer) {
    const std::string base = prefix + ".enc" + std::to_string(layer);
    a = h;
    layer_norm_eval(ps.vec(base + ".ln1.g"), ps.vec(base + ".ln1.b"), a.data(), L, D);
    dense_eval(ps, base + ".attn.wq", base + ".attn.bq", a.data(), L, D, D, q.data());
    dense_eval(ps, base + ".attn.wk", base + ".attn.bk", a.data(), L, D, D, k.data());
    dense_eval(ps, base + ".attn.wv", base + ".attn.bv", a.data(), L, D, D, v.data());
    std::fill(att.begin(), att.end(), T(0));
    for (int head = 0; head < nh; ++head) {
      const int c0 = head * dh;
      for (int i = 0; i < L; ++i) {
        const T* qi = q.data() + static_cast<int64_t>(i) * D + c0;
        for (int j = 0; j < L; ++j)
          prow[j] = static_cast<T>(dot_acc(qi, k.data() + static_cast<int64_t>(j) * D + c0, dh) *
                                   inv_sqrt);
        softmax_masked(prow.data(), L, L);
        T* oi = att.data() + static_cast<int64_t>(i) * D + c0;
        for (int d = 0; d < dh; ++d) {
          double s = 0.0;
          for (int j = 0; j < L; ++j)
            s += static_cast<double>(prow[j]) *
                 static_cast<double>(v[static_cast<int64_t>(j) * D + c0 + d]);
          oi[d] = static_cast<T>(s);
        }
      }
    }
    dense_eval(ps, base + ".attn.wo", base + ".attn.bo", att.data(), L, D, D, o.data());
    for (size_t i = 0; i < h.size(); ++i) h[i] = h[i] + o[i];

    f = h;
    layer_norm_eval(ps.vec(base + ".ln2.g"), ps.vec(base + ".ln2.b"), f.data(), L, D);
    std::fill(ff1.begin(), ff1.end(), T(0));
    dense_eval(ps, base + ".ff.w1", base + ".ff.b1", f.data(), L, D, cfg.feedforward_dim,
               ff1.data());
    for (auto& x : ff1) x = x > T(0) ? x : T(0);
    dense_eval(ps, base + ".ff.w2", base + ".ff.b2", ff1.data(), L, cfg.feedforward_dim, D,
               o.data());
    for (size_t i = 0; i < h.size(); ++i) h[i] = h[i] + o[i];
  }
  layer_norm_eval(ps.vec(prefix + ".lnf.g"), ps.vec(prefix + ".lnf.b"), h.data(), L, D);

  std::vector<T> pooled(D);
  for (int j = 0; j < D; ++j) {
    double s = 0.0;
    for (int i = 0; i < L; ++i) s += static_cast<double>(h[static_cast<int64_t>(i) * D + j]);
    pooled[j] = static_cast<T>(s / L);
  }
  dense_eval(ps, prefix + ".head.w", prefix + ".head.b", pooled.data(), 1, D, cfg.latent_dim,
             latent);
}

// plain causal conv matching Tape::conv1d_causal evaluated on a window of
// length in_len (weights laid out [out_ch, in_ch * kernel], lag-minor)
template <typename T>
void conv1d_eval(const std::vector<T>& w, const std::vector<T>& b, const T* x, int in_len,
                 int in_ch, int out_ch, int kernel, int stride, T* out) {
  const int out_len = conv_out_len(in_len, stride);
  for (int to = 0; to < out_len; ++to) {
    const int center = to * stride;
    for (int co = 0; co < out_ch; ++co) {
      double s = static_cast<double>(b[co]);
      const T* wr = w.data() + static_cast<int64_t>(co) * in_ch * kernel;
      for (int dt = 0; dt < kernel; ++dt) {
        const int ti = center - dt;
        if (ti < 0) continue;
        const T* xr = x + static_cast<int64_t>(ti) * in_ch;
        for (int ci = 0; ci < in_ch; ++ci)
          s += static_cast<double>(wr[ci * kernel + dt]) * static_cast<double>(xr[ci]);
      }
      out[static_cast<int64_t>(to) * out_ch + co] = static_cast<T>(s);
    }
  }
}

template <typename T>
void cnn_eval(const TypedStore<T>& ps, const std::string& prefix, const CnnConfig& cfg,
              const T* seq, int valid_len, T* latent) {
  require(valid_len >= 1 && valid_len <= cfg.history_len, ErrorCode::ShapeMismatch,
          "cnn_eval: valid length out of range");
  const int strides[3] = {1, 2, 2};
  int len = valid_len;
  int ch = cfg.input_dim;
  std::vector<T> cur(seq, seq + static_cast<int64_t>(len) * ch);
  std::vector<T> next;
  for (int l = 0; l < 3; ++l) {
    const int out_len = conv_out_len(len, strides[l]);
    next.assign(static_cast<int64_t>(out_len) * cfg.channels, T(0));
    const std::string base = prefix + ".conv" + std::to_string(l);
    conv1d_eval(ps.vec(base + ".w"), ps.vec(base + ".b"), cur.data(), len, ch, cfg.channels,
                cfg.kernel, strides[l], next.data());
    for (auto& v : next) v = v > T(0) ? v : T(0);
    cur.swap(next);
    len = out_len;
    ch = cfg.channels;
  }
  std::vector<T> pooled(ch);
  for (int j = 0; j < ch; ++j) {
    double s = 0.0;
    for (int i = 0; i < len; ++i) s += static_cast<double>(cur[static_cast<int64_t>(i) * ch + j]);
    pooled[j] = static_cast<T>(s / len);
  }
  dense_eval(ps, prefix + ".head.w", prefix + ".head.b", pooled.data(), 1, ch, cfg.latent_dim,
             latent);
}

}  // namespace ftc::nn
