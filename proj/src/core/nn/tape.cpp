#include "core/nn/tape.hpp"

#include <cmath>

#include "core/nn/kernels.hpp"

namespace ftc::nn {

namespace {
void check_2d(const Tensor& t, const char* who) {
  require(t.shape.size() == 2, ErrorCode::ShapeMismatch, std::string(who) + ": tensor must be 2-D");
}
}  // namespace

Tape::NodeId Tape::push(Tensor val, bool needs_grad, std::function<void(Tape&)> back) {
  Node n;
  n.val = std::move(val);
  n.needs_grad = needs_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

Tape::NodeId Tape::constant(Tensor v) { return push(std::move(v), false, nullptr); }

Tape::NodeId Tape::param(const std::string& name) {
  require(store_ != nullptr, ErrorCode::Internal, "tape has no parameter store");
  const int entry = store_->id(name);
  NodeId id = push(store_->entry(entry).value, true, nullptr);
  nodes_[id].param_entry = entry;
  return id;
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  check_2d(A, "matmul");
  check_2d(B, "matmul");
  require(A.cols() == B.rows(), ErrorCode::ShapeMismatch, "matmul: inner dimensions differ");
  const int m = A.rows(), k = A.cols(), n = B.cols();
  Tensor out({m, n});
  gemm(A.data.data(), B.data.data(), out.data.data(), m, k, n);
  return push(std::move(out), needs(a) || needs(b), [a, b, m, k, n](Tape& t) {
    NodeId self = t.cursor_;
    const Tensor& g = t.grad(self);
    if (t.needs(a))
      gemm_nt_add(g.data.data(), t.value(b).data.data(), t.grad_mut(a).data.data(), m, n, k);
    if (t.needs(b))
      gemm_tn_add(t.value(a).data.data(), g.data.data(), t.grad_mut(b).data.data(), m, k, n);
  });
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.same_shape(B), ErrorCode::ShapeMismatch, "add: shapes differ");
  Tensor out(A.shape);
  for (int64_t i = 0; i < A.size(); ++i) out.data[i] = A.data[i] + B.data[i];
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t) {
    const Tensor& g = t.grad(t.cursor_);
    if (t.needs(a)) {
      Tensor& ga = t.grad_mut(a);
      for (int64_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
    }
    if (t.needs(b)) {
      Tensor& gb = t.grad_mut(b);
      for (int64_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i];
    }
  });
}

Tape::NodeId Tape::sub(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.same_shape(B), ErrorCode::ShapeMismatch, "sub: shapes differ");
  Tensor out(A.shape);
  for (int64_t i = 0; i < A.size(); ++i) out.data[i] = A.data[i] - B.data[i];
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t) {
    const Tensor& g = t.grad(t.cursor_);
    if (t.needs(a)) {
      Tensor& ga = t.grad_mut(a);
      for (int64_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
    }
    if (t.needs(b)) {
      Tensor& gb = t.grad_mut(b);
      for (int64_t i = 0; i < g.size(); ++i) gb.data[i] -= g.data[i];
    }
  });
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.same_shape(B), ErrorCode::ShapeMismatch, "mul: shapes differ");
  Tensor out(A.shape);
  for (int64_t i = 0; i < A.size(); ++i) out.data[i] = A.data[i] * B.data[i];
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t) {
    const Tensor& g = t.grad(t.cursor_);
    if (t.needs(a)) {
      Tensor& ga = t.grad_mut(a);
      const Tensor& B2 = t.value(b);
      for (int64_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * B2.data[i];
    }
    if (t.needs(b)) {
      Tensor& gb = t.grad_mut(b);
      const Tensor& A2 = t.value(a);
      for (int64_t i = 0; i < g.size(); ++i) gb.data[i] += g.data[i] * A2.data[i];
    }
  });
}

Tape::NodeId Tape::min_ew(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.same_shape(B), ErrorCode::ShapeMismatch, "min: shapes differ");
  Tensor out(A.shape);
  for (int64_t i = 0; i < A.size(); ++i) out.data[i] = std::min(A.data[i], B.data[i]);
  // ties route the gradient to the first argument
  return push(std::move(out), needs(a) || needs(b), [a, b](Tape& t) {
    const Tensor& g = t.grad(t.cursor_);
    const Tensor& A2 = t.value(a);
    const Tensor& B2 = t.value(b);
    for (int64_t i = 0; i < g.size(); ++i) {
      if (A2.data[i] <= B2.data[i]) {
        if (t.needs(a)) t.grad_mut(a).data[i] += g.data[i];
      } else {
        if (t.needs(b)) t.grad_mut(b).data[i] += g.data[i];
      }
    }
  });
}

Tape::NodeId Tape::scale(NodeId a, float c) {
  const Tensor& A = value(a);
  Tensor out(A.shape);
  for (int64_t i = 0; i < A.size(); ++i) out.data[i] = A.data[i] * c;
  return push(std::move(out), needs(a), [a, c](Tape& t) {
    if (!t.needs(a)) return;
    const Tensor& g = t.grad(t.cursor_);
    Tensor& ga = t.grad_mut(a);
    for (int64_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * c;
  });
}

Tape::NodeId Tape::add_scalar(NodeId a, float c) {
  const Tensor& A = value(a);
  Tensor out(A.shape);
  for (int64_t i = 0; i < A.size(); ++i) out.data[i] = A.data[i] + c;
  return push(std::move(out), needs(a), [a](Tape& t) {
    if (!t.needs(a)) return;
    const Tensor& g = t.grad(t.cursor_);
    Tensor& ga = t.grad_mut(a);
    for (int64_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
  });
}

Tape::NodeId Tape::clamp(NodeId a, float lo, float hi) {
  const Tensor& A = value(a);
  Tensor out(A.shape);
  for (int64_t i = 0; i < A.size(); ++i) out.data[i] = std::min(std::max(A.data[i], lo), hi);
  return push(std::move(out), needs(a), [a, lo, hi](Tape& t) {
    if (!t.needs(a)) return;
    const Tensor& g = t.grad(t.cursor_);
    const Tensor& A2 = t.value(a);
    Tensor& ga = t.grad_mut(a);
    for (int64_t i = 0; i < g.size(); ++i)
      if (A2.data[i] >= lo && A2.data[i] <= hi) ga.data[i] += g.data[i];
  });
}

Tape::NodeId Tape::add_rowvec(NodeId a, NodeId v) {
  const Tensor& A = value(a);
  const Tensor& V = value(v);
  require(V.rows() == 1 && V.cols() == A.cols(), ErrorCode::ShapeMismatch,
          "add_rowvec: vector shape mismatch");
  Tensor out(A.shape);
  const int m = A.rows(), n = A.cols();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) = A.at(i, j) + V.data[j];
  return push(std::move(out), needs(a) || needs(v), [a, v, m, n](Tape& t) {
    const Tensor& g = t.grad(t.cursor_);
    if (t.needs(a)) {
      Tensor& ga = t.grad_mut(a);
      for (int64_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
    }
    if (t.needs(v)) {
      Tensor& gv = t.grad_mut(v);
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int i = 0; i < m; ++i) s += static_cast<double>(g.at(i, j));
        gv.data[j] += static_cast<float>(s);
      }
    }
  });
}

Tape::NodeId Tape::mul_rowvec(NodeId a, NodeId v) {
  const Tensor& A = value(a);
  const Tensor& V = value(v);
  require(V.rows() == 1 && V.cols() == A.cols(), ErrorCode::ShapeMismatch,
          "mul_rowvec: vector shape mismatch");
  Tensor out(A.shape);
  const int m = A.rows(), n = A.cols();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(i, j) = A.at(i, j) * V.data[j];
  return push(std::move(out), needs(a) || needs(v), [a, v, m, n](Tape& t) {
    const Tensor& g = t.grad(t.cursor_);
    if (t.needs(a)) {
      Tensor& ga = t.grad_mut(a);
      const Tensor& V2 = t.value(v);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) ga.at(i, j) += g.at(i, j) * V2.data[j];
    }
    if (t.needs(v)) {
      Tensor& gv = t.grad_mut(v);
      const Tensor& A2 = t.value(a);
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int i = 0; i < m; ++i)
          s += static_cast<double>(g.at(i, j)) * static_cast<double>(A2.at(i, j));
        gv.data[j] += static_cast<float>(s);
      }
    }
  });
}

Tape::NodeId Tape::concat_cols(NodeId a, NodeId b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  require(A.rows() == B.rows(), ErrorCode::ShapeMismatch, "concat_cols: row counts differ");
  const int m = A.rows(), p = A.cols(), q = B.cols();
  Tensor out({m, p + q});
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < p; ++j) out.at(i, j) = A.at(i, j);
    for (int j = 0; j < q; ++j) out.at(i, p + j) = B.at(i, j);
  }
  return push(std::move(out), needs(a) || needs(b), [a, b, m, p, q](Tape& t) {
    const Tensor& g = t.grad(t.cursor_);
    if (t.needs(a)) {
      Tensor& ga = t.grad_mut(a);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < p; ++j) ga.at(i, j) += g.at(i, j);
    }
    if (t.needs(b)) {
      Tensor& gb = t.grad_mut(b);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < q; ++j) gb.at(i, j) += g.at(i, p + j);
    }
  });
}

Tape::NodeId Tape::tanh(NodeId a) {
  const Tensor& A = value(a);
  Tensor out(A.shape);
  for (int64_t i = 0; i < A.size(); ++i) out.data[i] = std::tanh(A.data[i]);
  return push(std::move(out), needs(a), [a](Tape& t) {
    if (!t.needs(a)) return;
    const Tensor& g = t.grad(t.cursor_);
    const Tensor& y = t.value(t.cursor_);
    Tensor& ga = t.grad_mut(a);
    for (int64_t i = 0; i < g.size(); ++i)
      ga.data[i] += g.data[i] * (1.0f - y.data[i] * y.data[i]);
  });
}

Tape::NodeId Tape::relu(NodeId a) {
  const Tensor& A = value(a);
  Tensor out(A.shape);
  for (int64_t i = 0; i < A.size(); ++i) out.data[i] = A.data[i] > 0.0f ? A.data[i] : 0.0f;
  return push(std::move(out), needs(a), [a](Tape& t) {
    if (!t.needs(a)) return;
    const Tensor& g = t.grad(t.cursor_);
    const Tensor& A2 = t.value(a);
    Tensor& ga = t.grad_mut(a);
    for (int64_t i = 0; i < g.size(); ++i)
      if (A2.data[i] > 0.0f) ga.data[i] += g.data[i];
  });
}

Tape::NodeId Tape::exp(NodeId a) {
  const Tensor& A = value(a);
  Tensor out(A.shape);
  for (int64_t i = 0; i < A.size(); ++i) out.data[i] = std::exp(A.data[i]);
  return push(std::move(out), needs(a), [a](Tape& t) {
    if (!t.needs(a)) return;
    const Tensor& g = t.grad(t.cursor_);
    const Tensor& y = t.value(t.cursor_);
    Tensor& ga = t.grad_mut(a);
    for (int64_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i] * y.data[i];
  });
}

Tape::NodeId Tape::square(NodeId a) {
  const Tensor& A = value(a);
  Tensor out(A.shape);
  for (int64_t i = 0; i < A.size(); ++i) out.data[i] = A.data[i] * A.data[i];
  return push(std::move(out), needs(a), [a](Tape& t) {
    if (!t.needs(a)) return;
    const Tensor& g = t.grad(t.cursor_);
    const Tensor& A2 = t.value(a);
    Tensor& ga = t.grad_mut(a);
    for (int64_t i = 0; i < g.size(); ++i) ga.data[i] += 2.0f * g.data[i] * A2.data[i];
  });
}

Tape::NodeId Tape::sum_cols(NodeId a) {
  const Tensor& A = value(a);
  const int m = A.rows(), n = A.cols();
  Tensor out({m, 1});
  for (int i = 0; i < m; ++i)
    out.data[i] = static_cast<float>(sum_acc(A.data.data() + static_cast<int64_t>(i) * n, n));
  return push(std::move(out), needs(a), [a, m, n](Tape& t) {
    if (!t.needs(a)) return;
    const Tensor& g = t.grad(t.cursor_);
    Tensor& ga = t.grad_mut(a);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) ga.at(i, j) += g.data[i];
  });
}

Tape::NodeId Tape::sum_all(NodeId a) {
  const Tensor& A = value(a);
  Tensor out = Tensor::scalar(static_cast<float>(sum_acc(A.data.data(), A.size())));
  return push(std::move(out), needs(a), [a](Tape& t) {
    if (!t.needs(a)) return;
    const float g = t.grad(t.cursor_).data[0];
    Tensor& ga = t.grad_mut(a);
    for (auto& v : ga.data) v += g;
  });
}

Tape::NodeId Tape::mean_all(NodeId a) {
  const Tensor& A = value(a);
  const double inv = 1.0 / static_cast<double>(A.size());
  Tensor out = Tensor::scalar(static_cast<float>(sum_acc(A.data.data(), A.size()) * inv));
  return push(std::move(out), needs(a), [a, inv](Tape& t) {
    if (!t.needs(a)) return;
    const float g = static_cast<float>(t.grad(t.cursor_).data[0] * inv);
    Tensor& ga = t.grad_mut(a);
    for (auto& v : ga.data) v += g;
  });
}

Tape::NodeId Tape::layer_norm(NodeId a, NodeId gain, NodeId bias) {
  const Tensor& A = value(a);
  const Tensor& G = value(gain);
  const Tensor& B = value(bias);
  const int m = A.rows(), n = A.cols();
  require(G.rows() == 1 && G.cols() == n && B.rows() == 1 && B.cols() == n,
          ErrorCode::ShapeMismatch, "layer_norm: gain/bias shape mismatch");
  constexpr double kEps = 1e-5;

  auto xhat = std::make_shared<std::vector<float>>(static_cast<size_t>(m) * n);
  auto inv_std = std::make_shared<std::vector<float>>(m);
  Tensor out(A.shape);
  for (int i = 0; i < m; ++i) {
    const float* row = A.data.data() + static_cast<int64_t>(i) * n;
    const double mean = sum_acc(row, n) / n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) {
      const double d = static_cast<double>(row[j]) - mean;
      var += d * d;
    }
    var /= n;
    const double is = 1.0 / std::sqrt(var + kEps);
    (*inv_std)[i] = static_cast<float>(is);
    for (int j = 0; j < n; ++j) {
      const float xh = static_cast<float>((static_cast<double>(row[j]) - mean) * is);
      (*xhat)[static_cast<size_t>(i) * n + j] = xh;
      out.at(i, j) = xh * G.data[j] + B.data[j];
    }
  }
  return push(std::move(out), needs(a) || needs(gain) || needs(bias),
              [a, gain, bias, m, n, xhat, inv_std](Tape& t) {
                const Tensor& g = t.grad(t.cursor_);
                const Tensor& G2 = t.value(gain);
                if (t.needs(gain)) {
                  Tensor& gg = t.grad_mut(gain);
                  for (int j = 0; j < n; ++j) {
                    double s = 0.0;
                    for (int i = 0; i < m; ++i)
                      s += static_cast<double>(g.at(i, j)) *
                           static_cast<double>((*xhat)[static_cast<size_t>(i) * n + j]);
                    gg.data[j] += static_cast<float>(s);
                  }
                }
                if (t.needs(bias)) {
                  Tensor& gb = t.grad_mut(bias);
                  for (int j = 0; j < n; ++j) {
                    double s = 0.0;
                    for (int i = 0; i < m; ++i) s += static_cast<double>(g.at(i, j));
                    gb.data[j] += static_cast<float>(s);
                  }
                }
                if (t.needs(a)) {
                  Tensor& ga = t.grad_mut(a);
                  for (int i = 0; i < m; ++i) {
                    const float* xh = xhat->data() + static_cast<size_t>(i) * n;
                    const double is = static_cast<double>((*inv_std)[i]);
                    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                    for (int j = 0; j < n; ++j) {
                      const double dxh =
                          static_cast<double>(g.at(i, j)) * static_cast<double>(G2.data[j]);
                      sum_dxhat += dxh;
                      sum_dxhat_xhat += dxh * static_cast<double>(xh[j]);
                    }
                    for (int j = 0; j < n; ++j) {
                      const double dxh =
                          static_cast<double>(g.at(i, j)) * static_cast<double>(G2.data[j]);
                      const double dx =
                          is * (dxh - sum_dxhat / n -
                                static_cast<double>(xh[j]) * sum_dxhat_xhat / n);
                      ga.at(i, j) += static_cast<float>(dx);
                    }
                  }
                }
              });
}

Tape::NodeId Tape::add_posemb(NodeId a, NodeId pos, int batch) {
  const Tensor& A = value(a);
  const Tensor& P = value(pos);
  const int L = P.rows(), D = P.cols();
  require(A.cols() == D && A.rows() == batch * L, ErrorCode::ShapeMismatch,
          "add_posemb: shape mismatch");
  Tensor out(A.shape);
  for (int b = 0; b < batch; ++b)
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < D; ++j) out.at(b * L + i, j) = A.at(b * L + i, j) + P.at(i, j);
  return push(std::move(out), needs(a) || needs(pos), [a, pos, batch, L, D](Tape& t) {
    const Tensor& g = t.grad(t.cursor_);
    if (t.needs(a)) {
      Tensor& ga = t.grad_mut(a);
      for (int64_t i = 0; i < g.size(); ++i) ga.data[i] += g.data[i];
    }
    if (t.needs(pos)) {
      Tensor& gp = t.grad_mut(pos);
      for (int i = 0; i < L; ++i)
        for (int j = 0; j < D; ++j) {
          double s = 0.0;
          for (int b = 0; b < batch; ++b) s += static_cast<double>(g.at(b * L + i, j));
          gp.at(i, j) += static_cast<float>(s);
        }
    }
  });
}

Tape::NodeId Tape::multi_head_attention(NodeId q, NodeId k, NodeId v, int num_heads, int batch,
                                        int seq_len, std::vector<int> valid) {
  const Tensor& Q = value(q);
  const Tensor& K = value(k);
  const Tensor& V = value(v);
  const int D = Q.cols();
  require(K.cols() == D && V.cols() == D, ErrorCode::ShapeMismatch,
          "attention: q/k/v dims differ");
  require(Q.rows() == batch * seq_len && K.rows() == Q.rows() && V.rows() == Q.rows(),
          ErrorCode::ShapeMismatch, "attention: sequence lengths differ");
  require(D % num_heads == 0, ErrorCode::ShapeMismatch,
          "attention: model dim not divisible by heads");
  require(static_cast<int>(valid.size()) == batch, ErrorCode::ShapeMismatch,
          "attention: one valid length per window required");
  const int dh = D / num_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

  // attention probabilities are kept for the backward pass
  auto probs = std::make_shared<std::vector<float>>(
      static_cast<size_t>(batch) * num_heads * seq_len * seq_len, 0.0f);

  Tensor out = Tensor::zeros(Q.shape);
  for (int b = 0; b < batch; ++b) {
    const int L = seq_len;
    const int n_valid = valid[b];
    require(n_valid >= 1 && n_valid <= L, ErrorCode::ShapeMismatch,
            "attention: valid length out of range");
    const int64_t base_row = static_cast<int64_t>(b) * L;
    for (int h = 0; h < num_heads; ++h) {
      const int c0 = h * dh;
      float* P = probs->data() +
                 (static_cast<size_t>(b) * num_heads + h) * static_cast<size_t>(L) * L;
      for (int i = 0; i < n_valid; ++i) {
        float* prow = P + static_cast<size_t>(i) * L;
        const float* qi = Q.data.data() + (base_row + i) * D + c0;
        for (int j = 0; j < n_valid; ++j) {
          const float* kj = K.data.data() + (base_row + j) * D + c0;
          prow[j] = static_cast<float>(dot_acc(qi, kj, dh) * inv_sqrt);
        }
        softmax_masked(prow, L, n_valid);
        float* oi = out.data.data() + (base_row + i) * D + c0;
        for (int d = 0; d < dh; ++d) {
          double s = 0.0;
          for (int j = 0; j < n_valid; ++j)
            s += static_cast<double>(prow[j]) *
                 static_cast<double>(V.data[(base_row + j) * D + c0 + d]);
          oi[d] = static_cast<float>(s);
        }
      }
    }
  }

  return push(std::move(out), needs(q) || needs(k) || needs(v),
              [q, k, v, num_heads, batch, seq_len, dh, inv_sqrt, probs,
               valid = std::move(valid)](Tape& t) {
                const Tensor& g = t.grad(t.cursor_);
                const Tensor& Q2 = t.value(q);
                const Tensor& K2 = t.value(k);
                const Tensor& V2 = t.value(v);
                const int D = Q2.cols();
                const int L = seq_len;
                std::vector<double> gp(static_cast<size_t>(L) * L);
                std::vector<double> ds(static_cast<size_t>(L) * L);
                for (int b = 0; b < batch; ++b) {
                  const int n_valid = valid[b];
                  const int64_t base_row = static_cast<int64_t>(b) * L;
                  for (int h = 0; h < num_heads; ++h) {
                    const int c0 = h * dh;
                    const float* P = probs->data() + (static_cast<size_t>(b) * num_heads + h) *
                                                         static_cast<size_t>(L) * L;
                    // gP = dO V^T, then dS = P o (gP - rowsum(gP o P))
                    for (int i = 0; i < n_valid; ++i) {
                      const float* gi = g.data.data() + (base_row + i) * D + c0;
                      for (int j = 0; j < n_valid; ++j) {
                        const float* vj = V2.data.data() + (base_row + j) * D + c0;
                        gp[static_cast<size_t>(i) * L + j] = dot_acc(gi, vj, dh);
                      }
                      double dot = 0.0;
                      const float* prow = P + static_cast<size_t>(i) * L;
                      for (int j = 0; j < n_valid; ++j)
                        dot += gp[static_cast<size_t>(i) * L + j] * static_cast<double>(prow[j]);
                      for (int j = 0; j < n_valid; ++j)
                        ds[static_cast<size_t>(i) * L + j] =
                            static_cast<double>(prow[j]) *
                            (gp[static_cast<size_t>(i) * L + j] - dot) * inv_sqrt;
                    }
                    if (t.needs(q)) {
                      Tensor& gq = t.grad_mut(q);
                      for (int i = 0; i < n_valid; ++i) {
                        float* gqi = gq.data.data() + (base_row + i) * D + c0;
                        for (int d = 0; d < dh; ++d) {
                          double s = 0.0;
                          for (int j = 0; j < n_valid; ++j)
                            s += ds[static_cast<size_t>(i) * L + j] *
                                 static_cast<double>(K2.data[(base_row + j) * D + c0 + d]);
                          gqi[d] += static_cast<float>(s);
                        }
                      }
                    }
                    if (t.needs(k)) {
                      Tensor& gk = t.grad_mut(k);
                      for (int j = 0; j < n_valid; ++j) {
                        float* gkj = gk.data.data() + (base_row + j) * D + c0;
                        for (int d = 0; d < dh; ++d) {
                          double s = 0.0;
                          for (int i = 0; i < n_valid; ++i)
                            s += ds[static_cast<size_t>(i) * L + j] *
                                 static_cast<double>(Q2.data[(base_row + i) * D + c0 + d]);
                          gkj[d] += static_cast<float>(s);
                        }
                      }
                    }
                    if (t.needs(v)) {
                      Tensor& gv = t.grad_mut(v);
                      for (int j = 0; j < n_valid; ++j) {
                        float* gvj = gv.data.data() + (base_row + j) * D + c0;
                        for (int d = 0; d < dh; ++d) {
                          double s = 0.0;
                          for (int i = 0; i < n_valid; ++i)
                            s += static_cast<double>(P[static_cast<size_t>(i) * L + j]) *
                                 static_cast<double>(g.data[(base_row + i) * D + c0 + d]);
                          gvj[d] += static_cast<float>(s);
                        }
                      }
                    }
                  }
                }
              });
}

Tape::NodeId Tape::masked_mean_rows(NodeId a, int batch, int seq_len, std::vector<int> valid) {
  const Tensor& A = value(a);
  const int D = A.cols();
  require(A.rows() == batch * seq_len, ErrorCode::ShapeMismatch,
          "masked_mean_rows: shape mismatch");
  require(static_cast<int>(valid.size()) == batch, ErrorCode::ShapeMismatch,
          "masked_mean_rows: one valid length per window required");
  Tensor out({batch, D});
  for (int b = 0; b < batch; ++b) {
    const int n_valid = valid[b];
    require(n_valid >= 1 && n_valid <= seq_len, ErrorCode::ShapeMismatch,
            "masked_mean_rows: valid length out of range");
    for (int j = 0; j < D; ++j) {
      double s = 0.0;
      for (int i = 0; i < n_valid; ++i)
        s += static_cast<double>(A.at(b * seq_len + i, j));
      out.at(b, j) = static_cast<float>(s / n_valid);
    }
  }
  return push(std::move(out), needs(a),
              [a, batch, seq_len, D, valid = std::move(valid)](Tape& t) {
                if (!t.needs(a)) return;
                const Tensor& g = t.grad(t.cursor_);
                Tensor& ga = t.grad_mut(a);
                for (int b = 0; b < batch; ++b) {
                  const float inv = 1.0f / static_cast<float>(valid[b]);
                  for (int i = 0; i < valid[b]; ++i)
                    for (int j = 0; j < D; ++j)
                      ga.at(b * seq_len + i, j) += g.at(b, j) * inv;
                }
              });
}

Tape::NodeId Tape::conv1d_causal(NodeId x, NodeId w, NodeId b, int batch, int in_len, int in_ch,
                                 int out_ch, int kernel, int stride) {
  const Tensor& X = value(x);
  const Tensor& W = value(w);
  const Tensor& B = value(b);
  require(X.rows() == batch * in_len && X.cols() == in_ch, ErrorCode::ShapeMismatch,
          "conv1d: input shape mismatch");
  require(W.rows() == out_ch && W.cols() == in_ch * kernel, ErrorCode::ShapeMismatch,
          "conv1d: weight shape mismatch");
  require(B.rows() == 1 && B.cols() == out_ch, ErrorCode::ShapeMismatch,
          "conv1d: bias shape mismatch");
  const int out_len = (in_len - 1) / stride + 1;

  Tensor out({batch * out_len, out_ch});
  for (int bb = 0; bb < batch; ++bb) {
    for (int to = 0; to < out_len; ++to) {
      const int center = to * stride;
      for (int co = 0; co < out_ch; ++co) {
        double s = static_cast<double>(B.data[co]);
        const float* wr = W.data.data() + static_cast<int64_t>(co) * in_ch * kernel;
        for (int dt = 0; dt < kernel; ++dt) {
          const int ti = center - dt;
          if (ti < 0) continue;
          const float* xr = X.data.data() + (static_cast<int64_t>(bb) * in_len + ti) * in_ch;
          for (int ci = 0; ci < in_ch; ++ci)
            s += static_cast<double>(wr[ci * kernel + dt]) * static_cast<double>(xr[ci]);
        }
        out.at(bb * out_len + to, co) = static_cast<float>(s);
      }
    }
  }
  return push(std::move(out), needs(x) || needs(w) || needs(b),
              [x, w, b, batch, in_len, in_ch, out_ch, kernel, stride, out_len](Tape& t) {
                const Tensor& g = t.grad(t.cursor_);
                const Tensor& X2 = t.value(x);
                const Tensor& W2 = t.value(w);
                if (t.needs(b)) {
                  Tensor& gb = t.grad_mut(b);
                  for (int co = 0; co < out_ch; ++co) {
                    double s = 0.0;
                    for (int r = 0; r < batch * out_len; ++r)
                      s += static_cast<double>(g.at(r, co));
                    gb.data[co] += static_cast<float>(s);
                  }
                }
                if (t.needs(w)) {
                  Tensor& gw = t.grad_mut(w);
                  std::vector<double> acc(static_cast<size_t>(out_ch) * in_ch * kernel, 0.0);
                  for (int bb = 0; bb < batch; ++bb)
                    for (int to = 0; to < out_len; ++to) {
                      const int center = to * stride;
                      for (int dt = 0; dt < kernel; ++dt) {
                        const int ti = center - dt;
                        if (ti < 0) continue;
                        const float* xr =
                            X2.data.data() + (static_cast<int64_t>(bb) * in_len + ti) * in_ch;
                        for (int co = 0; co < out_ch; ++co) {
                          const double gv = static_cast<double>(g.at(bb * out_len + to, co));
                          double* ar = acc.data() + static_cast<size_t>(co) * in_ch * kernel;
                          for (int ci = 0; ci < in_ch; ++ci)
                            ar[ci * kernel + dt] += gv * static_cast<double>(xr[ci]);
                        }
                      }
                    }
                  for (size_t i = 0; i < acc.size(); ++i)
                    gw.data[i] += static_cast<float>(acc[i]);
                }
                if (t.needs(x)) {
                  Tensor& gx = t.grad_mut(x);
                  for (int bb = 0; bb < batch; ++bb)
                    for (int to = 0; to < out_len; ++to) {
                      const int center = to * stride;
                      for (int dt = 0; dt < kernel; ++dt) {
                        const int ti = center - dt;
                        if (ti < 0) continue;
                        float* gxr =
                            gx.data.data() + (static_cast<int64_t>(bb) * in_len + ti) * in_ch;
                        for (int co = 0; co < out_ch; ++co) {
                          const float gv = g.at(bb * out_len + to, co);
                          const float* wr =
                              W2.data.data() + static_cast<int64_t>(co) * in_ch * kernel;
                          for (int ci = 0; ci < in_ch; ++ci)
                            gxr[ci] += gv * wr[ci * kernel + dt];
                        }
                      }
                    }
                }
              });
}

void Tape::backward(NodeId loss) {
  require(loss >= 0 && loss < node_count(), ErrorCode::Internal, "backward: bad node id");
  require(value(loss).size() == 1, ErrorCode::Internal, "backward: loss must be scalar");
  for (auto& n : nodes_) {
    n.grad = Tensor::zeros(n.val.shape);
  }
  nodes_[loss].grad.data[0] = 1.0f;
  for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
    if (!nodes_[i].needs_grad || !nodes_[i].back) continue;
    cursor_ = i;
    nodes_[i].back(*this);
  }
  if (store_ != nullptr) {
    for (auto& n : nodes_) {
      if (n.param_entry < 0) continue;
      Tensor& g = store_->entry(n.param_entry).grad;
      for (int64_t i = 0; i < g.size(); ++i) g.data[i] += n.grad.data[i];
    }
  }
}

}  // namespace ftc::nn
