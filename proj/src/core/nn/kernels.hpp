#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace ftc::nn {

// GEMM kernels templated on the element type. All inner products accumulate
// in 64-bit with a fixed summation order, so results are reproducible across
// runs of the same build regardless of threading at the call site.

namespace detail {
inline std::vector<double>& scratch(size_t n) {
  thread_local std::vector<double> buf;
  if (buf.size() < n) buf.resize(n);
  return buf;
}
}  // namespace detail

// C[m,n] = A[m,k] * B[k,n] (C overwritten)
template <typename T>
void gemm(const T* a, const T* b, T* c, int m, int k, int n) {
  auto& acc = detail::scratch(static_cast<size_t>(n));
  for (int i = 0; i < m; ++i) {
    double* row = acc.data();
    for (int j = 0; j < n; ++j) row[j] = 0.0;
    const T* ai = a + static_cast<int64_t>(i) * k;
    for (int l = 0; l < k; ++l) {
      const double av = static_cast<double>(ai[l]);
      const T* bl = b + static_cast<int64_t>(l) * n;
      for (int j = 0; j < n; ++j) row[j] += av * static_cast<double>(bl[j]);
    }
    T* ci = c + static_cast<int64_t>(i) * n;
    for (int j = 0; j < n; ++j) ci[j] = static_cast<T>(row[j]);
  }
}

// C[m,k] += A[m,n] * B[k,n]^T   (i.e. C_il += sum_j A_ij B_lj)
template <typename T>
void gemm_nt_add(const T* a, const T* b, T* c, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const T* ai = a + static_cast<int64_t>(i) * n;
    T* ci = c + static_cast<int64_t>(i) * k;
    for (int l = 0; l < k; ++l) {
      const T* bl = b + static_cast<int64_t>(l) * n;
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      int j = 0;
      for (; j + 4 <= n; j += 4) {
        s0 += static_cast<double>(ai[j]) * static_cast<double>(bl[j]);
        s1 += static_cast<double>(ai[j + 1]) * static_cast<double>(bl[j + 1]);
        s2 += static_cast<double>(ai[j + 2]) * static_cast<double>(bl[j + 2]);
        s3 += static_cast<double>(ai[j + 3]) * static_cast<double>(bl[j + 3]);
      }
      for (; j < n; ++j) s0 += static_cast<double>(ai[j]) * static_cast<double>(bl[j]);
      ci[l] += static_cast<T>(((s0 + s1) + (s2 + s3)));
    }
  }
}

// C[k,n] += A[m,k]^T * B[m,n]   (i.e. C_lj += sum_i A_il B_ij)
template <typename T>
void gemm_tn_add(const T* a, const T* b, T* c, int m, int k, int n) {
  auto& acc = detail::scratch(static_cast<size_t>(k) * n);
  double* buf = acc.data();
  const int64_t total = static_cast<int64_t>(k) * n;
  for (int64_t t = 0; t < total; ++t) buf[t] = 0.0;
  for (int i = 0; i < m; ++i) {
    const T* ai = a + static_cast<int64_t>(i) * k;
    const T* bi = b + static_cast<int64_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const double av = static_cast<double>(ai[l]);
      double* cl = buf + static_cast<int64_t>(l) * n;
      for (int j = 0; j < n; ++j) cl[j] += av * static_cast<double>(bi[j]);
    }
  }
  for (int64_t t = 0; t < total; ++t) c[t] += static_cast<T>(buf[t]);
}

// fixed-order dot product with 64-bit accumulation
template <typename T>
double dot_acc(const T* a, const T* b, int n) {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
  int j = 0;
  for (; j + 4 <= n; j += 4) {
    s0 += static_cast<double>(a[j]) * static_cast<double>(b[j]);
    s1 += static_cast<double>(a[j + 1]) * static_cast<double>(b[j + 1]);
    s2 += static_cast<double>(a[j + 2]) * static_cast<double>(b[j + 2]);
    s3 += static_cast<double>(a[j + 3]) * static_cast<double>(b[j + 3]);
  }
  for (; j < n; ++j) s0 += static_cast<double>(a[j]) * static_cast<double>(b[j]);
  return (s0 + s1) + (s2 + s3);
}

template <typename T>
double sum_acc(const T* a, int64_t n) {
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) s += static_cast<double>(a[i]);
  return s;
}

// softmax over entries [0, valid) of a row of length n; entries >= valid are
// set to exactly zero
template <typename T>
void softmax_masked(T* row, int n, int valid) {
  double mx = -1e300;
  for (int j = 0; j < valid; ++j) mx = std::max(mx, static_cast<double>(row[j]));
  double sum = 0.0;
  for (int j = 0; j < valid; ++j) {
    const double e = std::exp(static_cast<double>(row[j]) - mx);
    row[j] = static_cast<T>(e);
    sum += e;
  }
  const double inv = 1.0 / sum;
  for (int j = 0; j < valid; ++j) row[j] = static_cast<T>(static_cast<double>(row[j]) * inv);
  for (int j = valid; j < n; ++j) row[j] = static_cast<T>(0);
}

}  // namespace ftc::nn
