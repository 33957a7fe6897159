#pragma once

#include <vector>

#include "core/env.hpp"

namespace ftc {

// Ring buffer of the last H (observation, action) pairs feeding the history
// encoder. Materialized windows are ordered oldest -> newest; rows beyond
// valid_len are zero so batched (masked) and online paths see identical bits.
class HistoryBuffer {
 public:
  explicit HistoryBuffer(int capacity)
      : capacity_(capacity), data_(static_cast<size_t>(capacity) * kRowDim, 0.0f) {
    require(capacity >= 1, ErrorCode::InvalidConfig, "history capacity must be >= 1");
  }

  static constexpr int kRowDim = kObservationDim + kActionDim;  // 26

  void clear() {
    head_ = 0;
    valid_ = 0;
  }

  void push(const float* obs, const float* act) {
    float* row = data_.data() + static_cast<size_t>(head_) * kRowDim;
    std::copy(obs, obs + kObservationDim, row);
    std::copy(act, act + kActionDim, row + kObservationDim);
    head_ = (head_ + 1) % capacity_;
    if (valid_ < capacity_) ++valid_;
  }

  int valid_len() const { return valid_; }
  int capacity() const { return capacity_; }

  // writes `rows` rows of 26 floats; rows beyond valid_len are zeroed
  void materialize(float* out, int rows) const {
    require(rows >= valid_, ErrorCode::ShapeMismatch,
            "history materialize: fewer rows than valid entries");
    const int start = (head_ - valid_ + capacity_) % capacity_;
    for (int i = 0; i < valid_; ++i) {
      const int slot = (start + i) % capacity_;
      std::copy(data_.begin() + static_cast<size_t>(slot) * kRowDim,
                data_.begin() + static_cast<size_t>(slot + 1) * kRowDim,
                out + static_cast<size_t>(i) * kRowDim);
    }
    std::fill(out + static_cast<size_t>(valid_) * kRowDim,
              out + static_cast<size_t>(rows) * kRowDim, 0.0f);
  }

 private:
  int capacity_;
  int head_ = 0;
  int valid_ = 0;
  std::vector<float> data_;
};

}  // namespace ftc
