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

#include <array>
#include <cstddef>

#include "ulm/geometry.hpp"
#include "ulm/simulator/simulator.hpp"

namespace ulm::data {

inline constexpr std::size_t kPatchCount = 4;

// 2x2 tiling in row-major order: top-left, top-right, bottom-left, bottom-right.
struct PatchLayout {
  std::size_t frame_height = 0;
  std::size_t frame_width = 0;
  std::size_t patch_height = 0;
  std::size_t patch_width = 0;
  std::array<Point, kPatchCount> offsets{};

  // Throws ContractError for odd or zero dimensions.
  static PatchLayout for_frame(std::size_t height, std::size_t width);

  Point to_frame(std::size_t patch, Point p) const;
  Box to_frame(std::size_t patch, const Box& b) const;
};

// Annotations go to every patch their box overlaps with positive area, clipped
// and shifted into patch coordinates.
std::array<sim::Frame, kPatchCount> split_patches(const sim::Frame& frame, const PatchLayout& layout);

}  // namespace ulm::data
