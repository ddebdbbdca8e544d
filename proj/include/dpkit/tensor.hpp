// Copyright 2026 The dpkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace dpkit {

// Dense row-major tensor of doubles. The core keeps everything in double
// precision; reduced-precision behavior is emulated explicitly where needed.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
    data.assign(numel(shape), 0.0);
  }
  Tensor(std::initializer_list<std::size_t> s)
      : Tensor(std::vector<std::size_t>(s)) {}

  static std::size_t numel(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1},
                           std::multiplies<>{});
  }

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  // 2-D access; the hot paths index raw rows instead.
  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }
  double* row(std::size_t r) { return data.data() + r * cols(); }
  const double* row(std::size_t r) const { return data.data() + r * cols(); }

  void fill(double v) { data.assign(data.size(), v); }

  bool all_finite() const {
    for (double v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  Tensor& operator+=(const Tensor& o) {
    if (!same_shape(o)) throw std::invalid_argument("tensor shape mismatch");
    for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
    return *this;
  }
  Tensor& operator*=(double s) {
    for (double& v : data) v *= s;
    return *this;
  }
};

namespace linalg {

// out[r,n] += a[r,m] * b[m,n]
inline void matmul_acc(const double* a, const double* b, double* out,
                       std::size_t r, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < r; ++i) {
    const double* ai = a + i * m;
    double* oi = out + i * n;
    for (std::size_t k = 0; k < m; ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = b + k * n;
      for (std::size_t j = 0; j < n; ++j) oi[j] += aik * bk[j];
    }
  }
}

// out[r,n] += a[r,m] * b[n,m]^T
inline void matmul_bt_acc(const double* a, const double* b, double* out,
                          std::size_t r, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < r; ++i) {
    const double* ai = a + i * m;
    double* oi = out + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * m;
      double s = 0.0;
      for (std::size_t k = 0; k < m; ++k) s += ai[k] * bj[k];
      oi[j] += s;
    }
  }
}

// out[m,n] += a[r,m]^T * b[r,n]
inline void matmul_at_acc(const double* a, const double* b, double* out,
                          std::size_t r, std::size_t m, std::size_t n) {
  for (std::size_t i = 0; i < r; ++i) {
    const double* ai = a + i * m;
    const double* bi = b + i * n;
    for (std::size_t k = 0; k < m; ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      double* ok = out + k * n;
      for (std::size_t j = 0; j < n; ++j) ok[j] += aik * bi[j];
    }
  }
}

inline double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

inline double squared_norm(const std::vector<double>& v) {
  return dot(v.data(), v.data(), v.size());
}

}  // namespace linalg

// Round-to-nearest onto the IEEE binary16 value grid (including overflow to
// infinity past 65504). Used to emulate mixed-precision forward passes.
inline double fp16_round(double x) {
  if (std::isnan(x)) return x;
  float f = static_cast<float>(x);
  if (std::abs(f) > 65504.0f) {
    return std::signbit(f) ? -std::numeric_limits<double>::infinity()
                           : std::numeric_limits<double>::infinity();
  }
  if (f != 0.0f && std::abs(f) < 6.103515625e-05f) {
    // subnormal half grid: spacing 2^-24
    const double q = std::nearbyint(static_cast<double>(f) * 0x1.0p24);
    return q * 0x1.0p-24;
  }
  if (f == 0.0f) return 0.0;
  int exp = 0;
  const double mant = std::frexp(static_cast<double>(f), &exp);
  // mant in [0.5, 1): 11 significant bits for half precision
  const double q = std::nearbyint(mant * 2048.0) / 2048.0;
  return std::ldexp(q, exp);
}

}  // namespace dpkit
