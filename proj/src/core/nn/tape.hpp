#pragma once

#include <functional>
#include <memory>

#include "core/nn/params.hpp"
#include "core/nn/tensor.hpp"

namespace ftc::nn {

// Reverse-mode differentiation over a recorded tape. Nodes are appended in
// topological order by construction; backward walks the tape in reverse and
// accumulates gradients of a scalar loss into every parameter leaf's store.
//
// The op set is fixed: dense algebra, elementwise nonlinearities, layer norm,
// multi-head attention, causal 1-D convolution and masked pooling — enough
// for the policy, value, privileged-encoder and history-encoder networks.
class Tape {
 public:
  using NodeId = int;

  explicit Tape(ParamStore* store = nullptr) : store_(store) {}

  // leaf that requires no gradient
  NodeId constant(Tensor v);
  // leaf bound to a parameter in the store; gradients accumulate there
  NodeId param(const std::string& name);

  const Tensor& value(NodeId id) const { return nodes_[id].val; }
  const Tensor& grad(NodeId id) const { return nodes_[id].grad; }

  // ---- op builders ----
  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId min_ew(NodeId a, NodeId b);
  NodeId scale(NodeId a, float c);
  NodeId add_scalar(NodeId a, float c);
  NodeId clamp(NodeId a, float lo, float hi);
  NodeId add_rowvec(NodeId a, NodeId v);
  NodeId mul_rowvec(NodeId a, NodeId v);
  NodeId concat_cols(NodeId a, NodeId b);
  NodeId tanh(NodeId a);
  NodeId relu(NodeId a);
  NodeId exp(NodeId a);
  NodeId square(NodeId a);
  NodeId sum_cols(NodeId a);   // [m,n] -> [m,1]
  NodeId sum_all(NodeId a);    // -> [1,1]
  NodeId mean_all(NodeId a);   // -> [1,1]
  NodeId layer_norm(NodeId a, NodeId gain, NodeId bias);

  // batched fused ops over flattened (batch * seq_len) x dim tensors
  NodeId add_posemb(NodeId a, NodeId pos, int batch);
  NodeId multi_head_attention(NodeId q, NodeId k, NodeId v, int num_heads, int batch,
                              int seq_len, std::vector<int> valid);
  NodeId masked_mean_rows(NodeId a, int batch, int seq_len, std::vector<int> valid);
  NodeId conv1d_causal(NodeId x, NodeId w, NodeId b, int batch, int in_len, int in_ch,
                       int out_ch, int kernel, int stride);

  // backward from a scalar loss; gradients land in the bound ParamStore
  void backward(NodeId loss);

  int node_count() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    bool needs_grad = false;
    int param_entry = -1;
    std::function<void(Tape&)> back;
  };

  ParamStore* store_;
  std::vector<Node> nodes_;
  NodeId cursor_ = -1;  // node whose backward fn is currently running

  NodeId push(Tensor val, bool needs_grad, std::function<void(Tape&)> back);
  Tensor& grad_mut(NodeId id) { return nodes_[id].grad; }
  bool needs(NodeId id) const { return nodes_[id].needs_grad; }

  friend struct TapeOps;
};

}  // namespace ftc::nn
