#pragma once

#include <vector>

#include "core/nn/params.hpp"

namespace ftc::nn {

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction over a ParamStore. An optional active set
// restricts updates to a parameter subset (used to train phi with pi and mu
// frozen). Moment math runs in double per element; parameters stay float.
class Adam {
 public:
  Adam(const ParamStore& store, AdamConfig cfg);
  Adam(const ParamStore& store, AdamConfig cfg, std::vector<int> active_entries);

  void step(ParamStore& store);
  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }
  int64_t steps() const { return step_; }

 private:
  AdamConfig cfg_;
  int64_t step_ = 0;
  std::vector<int> active_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

// scales all gradients so the global L2 norm is at most max_norm; returns the
// pre-clip norm
double clip_grad_norm(ParamStore& store, double max_norm);

// entries whose name starts with the prefix
std::vector<int> entries_with_prefix(const ParamStore& store, const std::string& prefix);

}  // namespace ftc::nn
