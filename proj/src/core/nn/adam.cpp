#include "core/nn/adam.hpp"

#include <cmath>

namespace ftc::nn {

Adam::Adam(const ParamStore& store, AdamConfig cfg) : cfg_(cfg) {
  active_.resize(store.count());
  for (int i = 0; i < store.count(); ++i) active_[i] = i;
  m_.resize(store.count());
  v_.resize(store.count());
  for (int i = 0; i < store.count(); ++i) {
    m_[i].assign(store.entry(i).value.size(), 0.0);
    v_[i].assign(store.entry(i).value.size(), 0.0);
  }
}

Adam::Adam(const ParamStore& store, AdamConfig cfg, std::vector<int> active_entries)
    : Adam(store, cfg) {
  active_ = std::move(active_entries);
}

void Adam::step(ParamStore& store) {
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (int idx : active_) {
    auto& e = store.entry(idx);
    auto& m = m_[idx];
    auto& v = v_[idx];
    for (int64_t i = 0; i < e.value.size(); ++i) {
      const double g = static_cast<double>(e.grad.data[i]);
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      e.value.data[i] = static_cast<float>(static_cast<double>(e.value.data[i]) -
                                           cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
}

double clip_grad_norm(ParamStore& store, double max_norm) {
  double sq = 0.0;
  for (int i = 0; i < store.count(); ++i)
    for (float g : store.entry(i).grad.data) sq += static_cast<double>(g) * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const float s = static_cast<float>(max_norm / norm);
    for (int i = 0; i < store.count(); ++i)
      for (float& g : store.entry(i).grad.data) g *= s;
  }
  return norm;
}

std::vector<int> entries_with_prefix(const ParamStore& store, const std::string& prefix) {
  std::vector<int> out;
  for (int i = 0; i < store.count(); ++i)
    if (store.entry(i).name.rfind(prefix, 0) == 0) out.push_back(i);
  return out;
}

}  // namespace ftc::nn
