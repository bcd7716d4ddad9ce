// Copyright 2026 The vflkdk Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "vflkdk/errors.hpp"

namespace vflkdk {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw ShapeError("Matrix: data size " + std::to_string(data_.size()) +
                       " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
  }
  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> flat() { return data_; }
  std::span<const double> flat() const { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  bool same_shape(const Matrix& o) const noexcept {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline std::string shape_string(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline void require_same_shape(const Matrix& a, const Matrix& b, const char* where) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(where) + ": shape " + shape_string(a) + " vs " +
                     shape_string(b));
  }
}

inline bool all_finite(const Matrix& m) {
  return std::all_of(m.flat().begin(), m.flat().end(),
                     [](double v) { return std::isfinite(v); });
}

// a[n x k] * b^T where b is [m x k]; the layout used by dense layers (W is out x in).
inline Matrix matmul_transpose_b(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_transpose_b: " + shape_string(a) + " * (" + shape_string(b) +
                     ")^T");
  }
  Matrix out(a.rows(), b.rows());
  const std::size_t k = a.cols();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const double* ar = a.row(i).data();
    for (std::size_t j = 0; j < b.rows(); ++j) {
      const double* br = b.row(j).data();
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += ar[t] * br[t];
      out(i, j) = acc;
    }
  }
  return out;
}

// a[n x k] * b[k x m].
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_string(a) + " * " + shape_string(b));
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* o = out.row(i).data();
    for (std::size_t t = 0; t < a.cols(); ++t) {
      const double av = a(i, t);
      if (av == 0.0) continue;
      const double* br = b.row(t).data();
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += av * br[j];
    }
  }
  return out;
}

// a^T * b with a[n x p], b[n x q] -> [p x q].
inline Matrix matmul_transpose_a(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_transpose_a: (" + shape_string(a) + ")^T * " + shape_string(b));
  }
  Matrix out(a.cols(), b.cols());
  for (std::size_t n = 0; n < a.rows(); ++n) {
    const double* ar = a.row(n).data();
    const double* br = b.row(n).data();
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double av = ar[i];
      if (av == 0.0) continue;
      double* o = out.row(i).data();
      for (std::size_t j = 0; j < b.cols(); ++j) o[j] += av * br[j];
    }
  }
  return out;
}

// Horizontal concatenation of row-aligned blocks.
inline Matrix hconcat(std::span<const Matrix> blocks) {
  if (blocks.empty()) return {};
  const std::size_t rows = blocks.front().rows();
  std::size_t cols = 0;
  for (const auto& b : blocks) {
    if (b.rows() != rows) throw ShapeError("hconcat: row counts differ");
    cols += b.cols();
  }
  Matrix out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t offset = 0;
    for (const auto& b : blocks) {
      std::copy(b.row(r).begin(), b.row(r).end(), out.row(r).begin() + offset);
      offset += b.cols();
    }
  }
  return out;
}

// Columns [begin, begin + count).
inline Matrix column_slice(const Matrix& m, std::size_t begin, std::size_t count) {
  if (begin + count > m.cols()) throw ShapeError("column_slice: range past end");
  Matrix out(m.rows(), count);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    std::copy_n(m.row(r).begin() + begin, count, out.row(r).begin());
  }
  return out;
}

inline Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices) {
  Matrix out(indices.size(), m.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= m.rows()) throw ShapeError("gather_rows: index out of range");
    std::copy(m.row(indices[i]).begin(), m.row(indices[i]).end(), out.row(i).begin());
  }
  return out;
}

inline Matrix operator+(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "operator+");
  Matrix out = a;
  auto o = out.flat();
  auto bv = b.flat();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  return out;
}

inline Matrix operator-(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "operator-");
  Matrix out = a;
  auto o = out.flat();
  auto bv = b.flat();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return out;
}

inline Matrix operator*(double s, const Matrix& a) {
  Matrix out = a;
  for (double& v : out.flat()) v *= s;
  return out;
}

inline double max_abs_difference(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_difference");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a.flat()[i] - b.flat()[i]));
  }
  return m;
}

// Lowest index among the maximal entries.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace vflkdk
