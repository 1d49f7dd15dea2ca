// Copyright 2026 The SMTL Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace smtl {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major float64 array. Rank 0 and rank 1 of length 1 both act as
/// scalars.
class Tensor {
 public:
  Tensor() : shape_{1}, data_(1, 0.0) {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<double> values);
  static Tensor identity(std::size_t n);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool is_scalar() const noexcept { return data_.size() == 1; }

  // Leading dimension and product of the remaining ones.
  std::size_t rows() const noexcept { return shape_.empty() ? 1 : shape_.front(); }
  std::size_t cols() const noexcept { return rows() == 0 ? 0 : data_.size() / rows(); }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

  double item() const;
  bool all_finite() const noexcept;

  // Copies the listed rows of a matrix into a new [indices.size(), cols] tensor.
  Tensor gather_rows(std::span<const std::size_t> indices) const;
  Tensor row(std::size_t r) const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

double max_abs_diff(const Tensor& a, const Tensor& b);
bool bitwise_equal(const Tensor& a, const Tensor& b);
Tensor vstack(std::span<const Tensor> parts);

}  // namespace smtl
