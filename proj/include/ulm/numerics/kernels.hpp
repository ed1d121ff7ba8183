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
#include <span>
#include <string_view>

// Dense inner kernels with a scalar reference path and SIMD variants picked
// at runtime. All matrices are row-major with an explicit row stride.
namespace ulm::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);
bool isa_supported(Isa isa);
Isa active_isa();
// Forces a path; throws ContractError when the CPU lacks it. Tests only.
void set_isa(Isa isa);

struct ConstMatrixView {
  const double* data;
  std::size_t rows;
  std::size_t cols;
  std::size_t stride;
};

struct MatrixView {
  double* data;
  std::size_t rows;
  std::size_t cols;
  std::size_t stride;
};

// c (+)= a * b
void gemm_nn(ConstMatrixView a, ConstMatrixView b, MatrixView c, bool accumulate);
// c (+)= a * b^T
void gemm_nt(ConstMatrixView a, ConstMatrixView b, MatrixView c, bool accumulate);
// c (+)= a^T * b
void gemm_tn(ConstMatrixView a, ConstMatrixView b, MatrixView c, bool accumulate);

double dot(std::span<const double> x, std::span<const double> y);
// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);

// Per-ISA entry points, exposed so equivalence tests can call both paths.
namespace scalar {
void gemm_nn(ConstMatrixView a, ConstMatrixView b, MatrixView c, bool accumulate);
double dot(const double* x, const double* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace scalar

namespace avx2 {
void gemm_nn(ConstMatrixView a, ConstMatrixView b, MatrixView c, bool accumulate);
double dot(const double* x, const double* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
}  // namespace avx2

}  // namespace ulm::kernels
