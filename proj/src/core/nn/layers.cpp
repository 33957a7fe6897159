#include "core/nn/layers.hpp"

namespace ftc::nn {

namespace {
void register_dense(ParamStore& store, const std::string& base, int in_dim, int out_dim,
                    Rng& rng) {
  store.add(base + ".w", init_uniform({in_dim, out_dim}, in_dim, rng));
  store.add(base + ".b", init_uniform({1, out_dim}, in_dim, rng));
}

void register_layer_norm(ParamStore& store, const std::string& base, int dim) {
  store.add(base + ".g", Tensor::full({1, dim}, 1.0f));
  store.add(base + ".b", Tensor::zeros({1, dim}));
}

Tape::NodeId dense(Tape& t, const std::string& base, Tape::NodeId x) {
  return t.add_rowvec(t.matmul(x, t.param(base + ".w")), t.param(base + ".b"));
}
}  // namespace

void mlp_register(ParamStore& store, const std::string& prefix, const MlpSpec& spec, Rng& rng) {
  require(spec.dims.size() >= 2, ErrorCode::ShapeMismatch, "mlp: need at least one layer");
  for (size_t l = 0; l + 1 < spec.dims.size(); ++l)
    register_dense(store, prefix + ".l" + std::to_string(l), spec.dims[l], spec.dims[l + 1],
                   rng);
}

Tape::NodeId mlp_apply(Tape& tape, const std::string& prefix, const MlpSpec& spec,
                       Tape::NodeId x) {
  const int n_layers = static_cast<int>(spec.dims.size()) - 1;
  Tape::NodeId h = x;
  for (int l = 0; l < n_layers; ++l) {
    h = dense(tape, prefix + ".l" + std::to_string(l), h);
    if (l + 1 < n_layers) h = tape.tanh(h);
  }
  return h;
}

void transformer_register(ParamStore& store, const std::string& prefix,
                          const TransformerConfig& cfg, Rng& rng) {
  require(cfg.model_dim % cfg.num_heads == 0, ErrorCode::ShapeMismatch,
          "transformer: model dim not divisible by heads");
  require(cfg.history_len >= 1, ErrorCode::ShapeMismatch, "transformer: history length < 1");
  const int D = cfg.model_dim;
  register_dense(store, prefix + ".embed", cfg.input_dim, D, rng);
  store.add(prefix + ".posemb", init_uniform({cfg.history_len, D}, D, rng));
  for (int l = 0; l < cfg.num_layers; ++l) {
    const std::string base = prefix + ".enc" + std::to_string(l);
    register_layer_norm(store, base + ".ln1", D);
    store.add(base + ".attn.wq", init_uniform({D, D}, D, rng));
    store.add(base + ".attn.bq", init_uniform({1, D}, D, rng));
    store.add(base + ".attn.wk", init_uniform({D, D}, D, rng));
    store.add(base + ".attn.bk", init_uniform({1, D}, D, rng));
    store.add(base + ".attn.wv", init_uniform({D, D}, D, rng));
    store.add(base + ".attn.bv", init_uniform({1, D}, D, rng));
    store.add(base + ".attn.wo", init_uniform({D, D}, D, rng));
    store.add(base + ".attn.bo", init_uniform({1, D}, D, rng));
    register_layer_norm(store, base + ".ln2", D);
    store.add(base + ".ff.w1", init_uniform({D, cfg.feedforward_dim}, D, rng));
    store.add(base + ".ff.b1", init_uniform({1, cfg.feedforward_dim}, D, rng));
    store.add(base + ".ff.w2", init_uniform({cfg.feedforward_dim, D}, cfg.feedforward_dim, rng));
    store.add(base + ".ff.b2", init_uniform({1, D}, cfg.feedforward_dim, rng));
  }
  register_layer_norm(store, prefix + ".lnf", D);
  register_dense(store, prefix + ".head", D, cfg.latent_dim, rng);
}

Tape::NodeId transformer_apply(Tape& tape, const std::string& prefix,
                               const TransformerConfig& cfg, Tape::NodeId x, int batch,
                               const std::vector<int>& valid) {
  Tape::NodeId h = dense(tape, prefix + ".embed", x);
  h = tape.add_posemb(h, tape.param(prefix + ".posemb"), batch);
  for (int l = 0; l < cfg.num_layers; ++l) {
    const std::string base = prefix + ".enc" + std::to_string(l);
    Tape::NodeId a = tape.layer_norm(h, tape.param(base + ".ln1.g"), tape.param(base + ".ln1.b"));
    Tape::NodeId q = tape.add_rowvec(tape.matmul(a, tape.param(base + ".attn.wq")),
                                     tape.param(base + ".attn.bq"));
    Tape::NodeId k = tape.add_rowvec(tape.matmul(a, tape.param(base + ".attn.wk")),
                                     tape.param(base + ".attn.bk"));
    Tape::NodeId v = tape.add_rowvec(tape.matmul(a, tape.param(base + ".attn.wv")),
                                     tape.param(base + ".attn.bv"));
    Tape::NodeId att =
        tape.multi_head_attention(q, k, v, cfg.num_heads, batch, cfg.history_len, valid);
    Tape::NodeId o = tape.add_rowvec(tape.matmul(att, tape.param(base + ".attn.wo")),
                                     tape.param(base + ".attn.bo"));
    h = tape.add(h, o);
    Tape::NodeId f = tape.layer_norm(h, tape.param(base + ".ln2.g"), tape.param(base + ".ln2.b"));
    Tape::NodeId ff = tape.relu(tape.add_rowvec(tape.matmul(f, tape.param(base + ".ff.w1")),
                                                tape.param(base + ".ff.b1")));
    Tape::NodeId ff2 = tape.add_rowvec(tape.matmul(ff, tape.param(base + ".ff.w2")),
                                       tape.param(base + ".ff.b2"));
    h = tape.add(h, ff2);
  }
  h = tape.layer_norm(h, tape.param(prefix + ".lnf.g"), tape.param(prefix + ".lnf.b"));
  Tape::NodeId pooled = tape.masked_mean_rows(h, batch, cfg.history_len, valid);
  return dense(tape, prefix + ".head", pooled);
}

void cnn_register(ParamStore& store, const std::string& prefix, const CnnConfig& cfg, Rng& rng) {
  int in_ch = cfg.input_dim;
  for (int l = 0; l < 3; ++l) {
    const std::string base = prefix + ".conv" + std::to_string(l);
    const int fan_in = in_ch * cfg.kernel;
    store.add(base + ".w", init_uniform({cfg.channels, fan_in}, fan_in, rng));
    store.add(base + ".b", init_uniform({1, cfg.channels}, fan_in, rng));
    in_ch = cfg.channels;
  }
  register_dense(store, prefix + ".head", cfg.channels, cfg.latent_dim, rng);
}

Tape::NodeId cnn_apply(Tape& tape, const std::string& prefix, const CnnConfig& cfg,
                       Tape::NodeId x, int batch, const std::vector<int>& valid) {
  const int strides[3] = {1, 2, 2};
  Tape::NodeId h = x;
  int len = cfg.history_len;
  int in_ch = cfg.input_dim;
  std::vector<int> v = valid;
  for (int l = 0; l < 3; ++l) {
    const std::string base = prefix + ".conv" + std::to_string(l);
    h = tape.conv1d_causal(h, tape.param(base + ".w"), tape.param(base + ".b"), batch, len,
                           in_ch, cfg.channels, cfg.kernel, strides[l]);
    h = tape.relu(h);
    len = conv_out_len(len, strides[l]);
    for (auto& n : v) n = conv_out_len(n, strides[l]);
    in_ch = cfg.channels;
  }
  Tape::NodeId pooled = tape.masked_mean_rows(h, batch, len, v);
  return dense(tape, prefix + ".head", pooled);
}

}  // namespace ftc::nn
