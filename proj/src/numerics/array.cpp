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

#include "ulm/numerics/array.hpp"

#include <cmath>
#include <fmt/format.h>

#include "ulm/errors.hpp"

namespace ulm {

std::size_t shape_product(const Shape& shape) {
  if (shape.empty()) return 0;
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_string(const Shape& shape) { return fmt::format("[{}]", fmt::join(shape, ",")); }

namespace {
void check_extents(const Shape& shape) {
  if (shape.empty()) throw DimensionError("NumArray: shape must have at least one axis");
  for (std::size_t e : shape) {
    if (e == 0) throw DimensionError("NumArray: extents must be positive, got " + shape_string(shape));
  }
}
}  // namespace

NumArray::NumArray(Shape shape, double fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(shape_product(shape_), fill);
}

NumArray::NumArray(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
  check_extents(shape_);
  if (data_.size() != shape_product(shape_)) {
    throw DimensionError(fmt::format("NumArray: {} values for shape {}", data_.size(), shape_string(shape_)));
  }
}

NumArray NumArray::vector(std::initializer_list<double> values) {
  return NumArray({values.size()}, std::vector<double>(values));
}

NumArray NumArray::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<double> values;
  const std::size_t cols = rows.size() == 0 ? 0 : rows.begin()->size();
  for (const auto& r : rows) {
    if (r.size() != cols) throw DimensionError("NumArray::matrix: ragged rows");
    values.insert(values.end(), r.begin(), r.end());
  }
  return NumArray({rows.size(), cols}, std::move(values));
}

std::size_t NumArray::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw DimensionError("NumArray::dim: axis out of range");
  return shape_[axis];
}

NumArray NumArray::reshaped(Shape shape) const {
  if (shape_product(shape) != size()) {
    throw DimensionError("reshape: " + shape_string(shape_) + " -> " + shape_string(shape));
  }
  return NumArray(std::move(shape), data_);
}

bool NumArray::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void NumArray::require_finite(std::string_view context) const {
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (!std::isfinite(data_[i])) {
      throw NumericError(fmt::format("{}: non-finite value {} at flat index {}", context, data_[i], i));
    }
  }
}

double max_abs_diff(const NumArray& a, const NumArray& b) {
  if (a.shape() != b.shape()) throw DimensionError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace ulm
