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

#include <atomic>
#include <cstdlib>
#include <string>
#include <vector>

#include "ulm/errors.hpp"

namespace ulm::kernels {
namespace {

struct Table {
  Isa isa;
  void (*gemm_nn)(ConstMatrixView, ConstMatrixView, MatrixView, bool);
  double (*dot)(const double*, const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
};

constexpr Table kScalar{Isa::scalar, &scalar::gemm_nn, &scalar::dot, &scalar::axpy};
#if defined(ULM_HAVE_AVX2)
constexpr Table kAvx2{Isa::avx2, &avx2::gemm_nn, &avx2::dot, &avx2::axpy};
#endif

const Table* table_for(Isa isa) {
#if defined(ULM_HAVE_AVX2)
  if (isa == Isa::avx2) return &kAvx2;
#endif
  (void)isa;
  return &kScalar;
}

const Table* detect() {
  if (const char* env = std::getenv("ULM_ISA"); env != nullptr && std::string(env) == "scalar") {
    return &kScalar;
  }
  return isa_supported(Isa::avx2) ? table_for(Isa::avx2) : &kScalar;
}

std::atomic<const Table*>& active() {
  static std::atomic<const Table*> t{detect()};
  return t;
}

void transpose(ConstMatrixView src, std::vector<double>& out) {
  out.resize(src.rows * src.cols);
  for (std::size_t i = 0; i < src.rows; ++i) {
    for (std::size_t j = 0; j < src.cols; ++j) out[j * src.rows + i] = src.data[i * src.stride + j];
  }
}

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

bool isa_supported(Isa isa) {
  if (isa == Isa::scalar) return true;
#if defined(ULM_HAVE_AVX2)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa active_isa() { return active().load()->isa; }

void set_isa(Isa isa) {
  if (!isa_supported(isa)) throw ContractError("kernels: ISA not supported on this CPU");
  active().store(table_for(isa));
}

void gemm_nn(ConstMatrixView a, ConstMatrixView b, MatrixView c, bool accumulate) {
  if (a.cols != b.rows || c.rows != a.rows || c.cols != b.cols) {
    throw DimensionError("gemm_nn: inner dimensions disagree");
  }
  active().load()->gemm_nn(a, b, c, accumulate);
}

void gemm_nt(ConstMatrixView a, ConstMatrixView b, MatrixView c, bool accumulate) {
  if (a.cols != b.cols || c.rows != a.rows || c.cols != b.rows) {
    throw DimensionError("gemm_nt: inner dimensions disagree");
  }
  thread_local std::vector<double> bt;
  transpose(b, bt);
  active().load()->gemm_nn(a, {bt.data(), b.cols, b.rows, b.rows}, c, accumulate);
}

void gemm_tn(ConstMatrixView a, ConstMatrixView b, MatrixView c, bool accumulate) {
  if (a.rows != b.rows || c.rows != a.cols || c.cols != b.cols) {
    throw DimensionError("gemm_tn: inner dimensions disagree");
  }
  thread_local std::vector<double> at;
  transpose(a, at);
  active().load()->gemm_nn({at.data(), a.cols, a.rows, a.rows}, b, c, accumulate);
}

double dot(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionError("dot: length mismatch");
  return active().load()->dot(x.data(), y.data(), x.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  if (x.size() != y.size()) throw DimensionError("axpy: length mismatch");
  active().load()->axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace ulm::kernels
