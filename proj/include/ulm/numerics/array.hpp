// Copyright 2026 The ULM-DETR Authors. All Rights Reserved.
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

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ulm {

using Shape = std::vector<std::size_t>;

std::size_t shape_product(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
///
/// Every extent is positive and `size() == product(shape)`. A
/// default-constructed array is the empty placeholder with no shape.
class NumArray {
 public:
  NumArray() = default;
  explicit NumArray(Shape shape, double fill = 0.0);
  NumArray(Shape shape, std::vector<double> values);

  static NumArray scalar(double v) { return NumArray({1}, {v}); }
  static NumArray vector(std::initializer_list<double> values);
  static NumArray matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const double* ptr() const { return data_.data(); }
  double* ptr() { return data_.data(); }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }
  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t c, std::size_t i, std::size_t j) const {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }
  double& at(std::size_t c, std::size_t i, std::size_t j) {
    return data_[(c * shape_[1] + i) * shape_[2] + j];
  }

  // Same data viewed with a different shape of equal element count.
  NumArray reshaped(Shape shape) const;

  bool all_finite() const;
  // Throws NumericError naming `context` when a value is NaN or Inf.
  void require_finite(std::string_view context) const;

  friend bool operator==(const NumArray&, const NumArray&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Largest absolute elementwise difference; shapes must match.
double max_abs_diff(const NumArray& a, const NumArray& b);

}  // namespace ulm
