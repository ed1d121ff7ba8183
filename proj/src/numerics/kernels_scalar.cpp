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

#include "ulm/numerics/kernels.hpp"

namespace ulm::kernels::scalar {

void gemm_nn(ConstMatrixView a, ConstMatrixView b, MatrixView c, bool accumulate) {
  for (std::size_t i = 0; i < c.rows; ++i) {
    double* crow = c.data + i * c.stride;
    if (!accumulate) {
      for (std::size_t j = 0; j < c.cols; ++j) crow[j] = 0.0;
    }
    const double* arow = a.data + i * a.stride;
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      const double* brow = b.data + k * b.stride;
      for (std::size_t j = 0; j < c.cols; ++j) crow[j] += aik * brow[j];
    }
  }
}

double dot(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace ulm::kernels::scalar
