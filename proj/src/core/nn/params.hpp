#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "core/nn/tensor.hpp"
#include "core/rng.hpp"

namespace ftc::nn {

// Ordered collection of named parameter tensors with matching gradient
// buffers. Insertion order defines the checkpoint manifest order.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
  };

  int add(const std::string& name, Tensor init) {
    require(index_.find(name) == index_.end(), ErrorCode::Internal,
            "duplicate parameter name: " + name);
    Entry e;
    e.name = name;
    e.grad = Tensor::zeros(init.shape);
    e.value = std::move(init);
    entries_.push_back(std::move(e));
    const int id = static_cast<int>(entries_.size()) - 1;
    index_[name] = id;
    return id;
  }

  int find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? -1 : it->second;
  }
  int id(const std::string& name) const {
    const int i = find(name);
    require(i >= 0, ErrorCode::Internal, "unknown parameter: " + name);
    return i;
  }

  int count() const { return static_cast<int>(entries_.size()); }
  Entry& entry(int i) { return entries_[i]; }
  const Entry& entry(int i) const { return entries_[i]; }
  Tensor& value(const std::string& name) { return entries_[id(name)].value; }
  const Tensor& value(const std::string& name) const { return entries_[id(name)].value; }
  Tensor& grad(const std::string& name) { return entries_[id(name)].grad; }

  void zero_grads() {
    for (auto& e : entries_) e.grad.fill(0.0f);
  }

  int64_t total_params() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

// uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) from a seeded generator
inline Tensor init_uniform(Shape shape, int fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  for (auto& v : t.data) v = static_cast<float>(rng.uniform(-bound, bound));
  return t;
}

}  // namespace ftc::nn
