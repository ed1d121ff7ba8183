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
#include <vector>

#include "ulm/numerics/graph.hpp"

namespace ulm::det {

struct LevelShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t pixels() const { return height * width; }
};

// Multi-scale deformable sampling.
//   value   [S, D]  level tokens stacked in level order, row-major pixels
//   ref     [Nq, 2] normalized (x, y) reference points
//   offsets [Nq, M*L*K*2] pixel displacements, index ((m*L + l)*K + k)*2 + {x, y}
//   weights [Nq, M*L*K] attention weights, already normalized per head
// Head m reads channels [m*D/M, (m+1)*D/M). Sample point (m, l, k) of query q
// sits at ref * (W_l, H_l) + offset in continuous pixel coordinates (pixel
// centres at i + 0.5); neighbours outside the level read as zero.
num::Var deform_sample(num::Var value, std::span<const LevelShape> levels, num::Var ref, num::Var offsets,
                       num::Var weights, std::size_t heads, std::size_t points);

// Token rows of `value` that query q's sample points can read, sorted.
std::vector<std::vector<std::size_t>> deform_footprint(const NumArray& ref, const NumArray& offsets,
                                                       std::span<const LevelShape> levels, std::size_t heads,
                                                       std::size_t points);

}  // namespace ulm::det
