#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "core/error.hpp"

namespace ftc::nn {

using Shape = std::vector<int>;

inline int64_t shape_size(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

// Dense row-major 32-bit float tensor. All shapes used by the op set are
// two-dimensional (vectors are 1 x n, scalars 1 x 1); batched sequences are
// flattened to (batch * seq_len) x dim.
struct Tensor {
  Shape shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(shape_size(shape), 0.0f) {}
  Tensor(Shape s, std::vector<float> d) : shape(std::move(s)), data(std::move(d)) {
    require(static_cast<int64_t>(data.size()) == shape_size(shape), ErrorCode::ShapeMismatch,
            "tensor data size does not match shape");
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
  static Tensor full(Shape s, float v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(float v) { return Tensor({1, 1}, {v}); }
  static Tensor row(std::vector<float> d) {
    const int n = static_cast<int>(d.size());
    return Tensor({1, n}, std::move(d));
  }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int rows() const { return shape.size() == 2 ? shape[0] : (shape.size() == 1 ? 1 : 0); }
  int cols() const {
    return shape.size() == 2 ? shape[1] : (shape.size() == 1 ? shape[0] : 0);
  }

  float& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
  float at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const {
    for (float v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(float v) { std::fill(data.begin(), data.end(), v); }
};

}  // namespace ftc::nn
