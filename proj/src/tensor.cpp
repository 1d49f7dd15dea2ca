// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "smtl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "smtl/error.hpp"

namespace smtl {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape_));
  }
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape_));
  }
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_str(shape_));
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
  return Tensor(Shape{rows, cols}, std::vector<double>(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape_));
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::gather_rows(std::span<const std::size_t> indices) const {
  const std::size_t c = cols();
  Shape s = shape_;
  s.front() = indices.size();
  if (indices.empty()) throw ShapeError("gather_rows with no indices");
  std::vector<double> out(indices.size() * c);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows()) throw ShapeError("row index out of range");
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(indices[i] * c), c,
                out.begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  return Tensor(std::move(s), std::move(out));
}

Tensor Tensor::row(std::size_t r) const {
  const std::size_t idx[1] = {r};
  return gather_rows(idx);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(double)) == 0;
}

Tensor vstack(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("vstack of nothing");
  const std::size_t c = parts.front().cols();
  std::size_t r = 0;
  std::vector<double> out;
  for (const auto& p : parts) {
    if (p.cols() != c) throw ShapeError("vstack column mismatch");
    r += p.rows();
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  Shape s = parts.front().shape();
  s.front() = r;
  return Tensor(std::move(s), std::move(out));
}

}  // namespace smtl
