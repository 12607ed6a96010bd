// Copyright (C) 2026 The DINMP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dinmp {

namespace detail {

inline void check(bool cond, const std::string& what) {
  if (!cond) throw std::invalid_argument(what);
}

inline std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

}  // namespace detail

/// Dense row-major float64 tensor. Rank-2 is the working shape for almost
/// every op; higher ranks are only reshaped views of the same buffer.
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(detail::product(shape_), fill) {}

  Tensor(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    detail::check(data_.size() == detail::product(shape_), "Tensor: data length does not match shape");
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
    return Tensor({rows, cols}, fill);
  }

  /// Builds a matrix from nested rows; every row must have the same length.
  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
      detail::check(row.size() == c, "Tensor::from_rows: ragged rows");
      data.insert(data.end(), row.begin(), row.end());
    }
    return Tensor({r, c}, std::move(data));
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t rows() const { return shape_.empty() ? 0 : shape_[0]; }
  /// Product of all trailing dimensions.
  std::size_t cols() const {
    if (shape_.empty()) return 0;
    return shape_[0] == 0 ? detail::product({shape_.begin() + 1, shape_.end()}) : data_.size() / shape_[0];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> row(std::size_t r) {
    const std::size_t c = cols();
    return {data_.data() + r * c, c};
  }
  std::span<const double> row(std::size_t r) const {
    const std::size_t c = cols();
    return {data_.data() + r * c, c};
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(std::vector<std::size_t> shape) const {
    detail::check(detail::product(shape) == data_.size(), "Tensor::reshaped: size mismatch");
    return Tensor(std::move(shape), data_);
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

inline std::string shape_string(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// Dense kernels. All take rank-2 operands and fail loudly on mismatched inner
// dimensions.

/// a (n×k) · b (k×m)
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::check(a.cols() == b.rows(), "matmul: inner dimension mismatch " + shape_string(a.shape()) + " x " +
                                          shape_string(b.shape()));
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  Tensor out = Tensor::matrix(n, m);
  for (std::size_t i = 0; i < n; ++i) {
    double* o = out.data() + i * m;
    const double* ar = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ar[p];
      if (av == 0.0) continue;
      const double* br = b.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
    }
  }
  return out;
}

/// aᵀ (k×n) · b (n×m), accumulated into `out` (k×m).
inline void matmul_at_b_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  detail::check(a.rows() == b.rows(), "matmul_at_b: row mismatch");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  detail::check(out.rows() == k && out.cols() == m, "matmul_at_b: output shape mismatch");
  for (std::size_t i = 0; i < n; ++i) {
    const double* ar = a.data() + i * k;
    const double* br = b.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ar[p];
      if (av == 0.0) continue;
      double* o = out.data() + p * m;
      for (std::size_t j = 0; j < m; ++j) o[j] += av * br[j];
    }
  }
}

/// a (n×m) · bᵀ (m×k)
inline Tensor matmul_a_bt(const Tensor& a, const Tensor& b) {
  detail::check(a.cols() == b.cols(), "matmul_a_bt: inner dimension mismatch");
  const std::size_t n = a.rows(), m = a.cols(), k = b.rows();
  Tensor out = Tensor::matrix(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    const double* ar = a.data() + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      const double* br = b.data() + p * m;
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += ar[j] * br[j];
      out(i, p) = s;
    }
  }
  return out;
}

inline void add_inplace(Tensor& a, const Tensor& b) {
  detail::check(a.size() == b.size(), "add_inplace: size mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace dinmp
