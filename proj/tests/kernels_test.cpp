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

#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <vector>

#include "test_support.hpp"
#include "ulm/numerics/kernels.hpp"

using namespace ulm;
namespace k = ulm::kernels;

namespace {

double rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(a[i])));
  }
  return worst;
}

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(-1, 1);
  return v;
}

}  // namespace

TEST_CASE("scalar and avx2 gemm agree on ragged shapes") {
  if (!k::isa_supported(k::Isa::avx2)) return;
  Rng rng(11);
  const std::size_t dims[] = {1, 3, 4, 5, 8, 9, 17, 64, 300};
  for (std::size_t m : dims) {
    for (std::size_t n : {1, 7, 8, 13, 64}) {
      for (std::size_t kk : {1, 2, 9, 257, 600}) {
        auto a = random_vec(m * kk, rng), b = random_vec(kk * n, rng), c0 = random_vec(m * n, rng);
        auto c1 = c0;
        const bool acc = ((m + n + kk) % 2) == 0;
        k::scalar::gemm_nn({a.data(), m, kk, kk}, {b.data(), kk, n, n}, {c0.data(), m, n, n}, acc);
        k::avx2::gemm_nn({a.data(), m, kk, kk}, {b.data(), kk, n, n}, {c1.data(), m, n, n}, acc);
        CHECK(rel_diff(c0, c1) < 1e-12);
      }
    }
  }
}

TEST_CASE("scalar and avx2 dot/axpy agree") {
  if (!k::isa_supported(k::Isa::avx2)) return;
  Rng rng(5);
  for (std::size_t n : {0, 1, 3, 4, 7, 8, 15, 16, 33, 1000}) {
    auto x = random_vec(n, rng), y = random_vec(n, rng);
    const double d0 = k::scalar::dot(x.data(), y.data(), n);
    const double d1 = k::avx2::dot(x.data(), y.data(), n);
    CHECK(std::abs(d0 - d1) <= 1e-12 * std::max(1.0, std::abs(d0)));
    auto y0 = y, y1 = y;
    k::scalar::axpy(0.37, x.data(), y0.data(), n);
    k::avx2::axpy(0.37, x.data(), y1.data(), n);
    CHECK(rel_diff(y0, y1) < 1e-15);
  }
}

TEST_CASE("transposed gemm variants match a naive oracle under both ISAs") {
  Rng rng(3);
  const std::size_t m = 6, n = 11, kk = 5;
  auto a = random_vec(m * kk, rng), b = random_vec(kk * n, rng);
  std::vector<double> expect(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t p = 0; p < kk; ++p) expect[i * n + j] += a[i * kk + p] * b[p * n + j];
  // a^T stored [kk, m], b^T stored [n, kk]
  std::vector<double> at(kk * m), bt(n * kk);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < kk; ++p) at[p * m + i] = a[i * kk + p];
  for (std::size_t p = 0; p < kk; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * kk + p] = b[p * n + j];

  const k::Isa saved = k::active_isa();
  for (k::Isa isa : {k::Isa::scalar, k::Isa::avx2}) {
    if (!k::isa_supported(isa)) continue;
    k::set_isa(isa);
    std::vector<double> c1(m * n), c2(m * n);
    k::gemm_nt({a.data(), m, kk, kk}, {bt.data(), n, kk, kk}, {c1.data(), m, n, n}, false);
    k::gemm_tn({at.data(), kk, m, m}, {b.data(), kk, n, n}, {c2.data(), m, n, n}, false);
    CHECK(rel_diff(expect, c1) < 1e-12);
    CHECK(rel_diff(expect, c2) < 1e-12);
  }
  k::set_isa(saved);
}

TEST_CASE("runtime dispatch prefers avx2 when the CPU has it") {
  if (std::getenv("ULM_ISA") != nullptr) return;
  CHECK(k::active_isa() == (k::isa_supported(k::Isa::avx2) ? k::Isa::avx2 : k::Isa::scalar));
}
