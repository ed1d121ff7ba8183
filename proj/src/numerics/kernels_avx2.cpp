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

// Compiled with -mavx2 -mfma; only reached after a runtime cpuid check.
#include "ulm/numerics/kernels.hpp"

#include <immintrin.h>

namespace ulm::kernels::avx2 {
namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

// 4 rows x 8 columns of c, full k loop held in registers.
inline void micro_4x8(const double* a, std::size_t lda, const double* b, std::size_t ldb,
                      double* c, std::size_t ldc, std::size_t k) {
  __m256d c00 = _mm256_loadu_pd(c), c01 = _mm256_loadu_pd(c + 4);
  __m256d c10 = _mm256_loadu_pd(c + ldc), c11 = _mm256_loadu_pd(c + ldc + 4);
  __m256d c20 = _mm256_loadu_pd(c + 2 * ldc), c21 = _mm256_loadu_pd(c + 2 * ldc + 4);
  __m256d c30 = _mm256_loadu_pd(c + 3 * ldc), c31 = _mm256_loadu_pd(c + 3 * ldc + 4);
  for (std::size_t p = 0; p < k; ++p) {
    const double* bp = b + p * ldb;
    __m256d b0 = _mm256_loadu_pd(bp);
    __m256d b1 = _mm256_loadu_pd(bp + 4);
    __m256d a0 = _mm256_broadcast_sd(a + p);
    __m256d a1 = _mm256_broadcast_sd(a + lda + p);
    __m256d a2 = _mm256_broadcast_sd(a + 2 * lda + p);
    __m256d a3 = _mm256_broadcast_sd(a + 3 * lda + p);
    c00 = _mm256_fmadd_pd(a0, b0, c00);
    c01 = _mm256_fmadd_pd(a0, b1, c01);
    c10 = _mm256_fmadd_pd(a1, b0, c10);
    c11 = _mm256_fmadd_pd(a1, b1, c11);
    c20 = _mm256_fmadd_pd(a2, b0, c20);
    c21 = _mm256_fmadd_pd(a2, b1, c21);
    c30 = _mm256_fmadd_pd(a3, b0, c30);
    c31 = _mm256_fmadd_pd(a3, b1, c31);
  }
  _mm256_storeu_pd(c, c00);
  _mm256_storeu_pd(c + 4, c01);
  _mm256_storeu_pd(c + ldc, c10);
  _mm256_storeu_pd(c + ldc + 4, c11);
  _mm256_storeu_pd(c + 2 * ldc, c20);
  _mm256_storeu_pd(c + 2 * ldc + 4, c21);
  _mm256_storeu_pd(c + 3 * ldc, c30);
  _mm256_storeu_pd(c + 3 * ldc + 4, c31);
}

// One row of c over columns [j0, n).
inline void row_tail(const double* arow, const double* b, std::size_t ldb, double* crow,
                     std::size_t j0, std::size_t n, std::size_t k) {
  std::size_t j = j0;
  for (; j + 4 <= n; j += 4) {
    __m256d acc = _mm256_loadu_pd(crow + j);
    for (std::size_t p = 0; p < k; ++p) {
      acc = _mm256_fmadd_pd(_mm256_broadcast_sd(arow + p), _mm256_loadu_pd(b + p * ldb + j), acc);
    }
    _mm256_storeu_pd(crow + j, acc);
  }
  for (; j < n; ++j) {
    double s = crow[j];
    for (std::size_t p = 0; p < k; ++p) s += arow[p] * b[p * ldb + j];
    crow[j] = s;
  }
}

}  // namespace

void gemm_nn(ConstMatrixView a, ConstMatrixView b, MatrixView c, bool accumulate) {
  const std::size_t m = c.rows, n = c.cols, k = a.cols;
  if (!accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = c.data + i * c.stride;
      for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
    }
  }
  // Block k so a 4-row strip of b stays in L1/L2.
  constexpr std::size_t kBlock = 256;
  for (std::size_t p0 = 0; p0 < k; p0 += kBlock) {
    const std::size_t kb = (p0 + kBlock < k) ? kBlock : k - p0;
    const double* bblk = b.data + p0 * b.stride;
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
      const double* ablk = a.data + i * a.stride + p0;
      double* cblk = c.data + i * c.stride;
      std::size_t j = 0;
      for (; j + 8 <= n; j += 8) micro_4x8(ablk, a.stride, bblk + j, b.stride, cblk + j, c.stride, kb);
      if (j < n) {
        for (std::size_t r = 0; r < 4; ++r) {
          row_tail(ablk + r * a.stride, bblk, b.stride, cblk + r * c.stride, j, n, kb);
        }
      }
    }
    for (; i < m; ++i) {
      row_tail(a.data + i * a.stride + p0, bblk, b.stride, c.data + i * c.stride, 0, n, kb);
    }
  }
}

double dot(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace ulm::kernels::avx2
