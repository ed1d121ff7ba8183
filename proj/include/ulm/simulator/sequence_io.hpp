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

#include <filesystem>
#include <string>
#include <vector>

#include "ulm/simulator/simulator.hpp"

namespace ulm::sim {

// Directory layout:
//   frames/frame_NNNNNN.f32   little-endian float32 raster
//   frames/frame_NNNNNN.json  {"width","height","dtype","frame_index"}
//   ground_truth.json         per-frame centroids and boxes
//   previews/frame_NNNNNN.png optional, min-max normalized
std::string frame_stem(std::int64_t index);
void write_sequence(const std::filesystem::path& dir, const std::vector<Frame>& frames, bool previews);
// Images come back rounded to float32.
std::vector<Frame> read_sequence(const std::filesystem::path& dir);
// Ground truth only; images are left empty.
std::vector<Frame> read_ground_truth(const std::filesystem::path& dir);

std::vector<std::uint8_t> preview_png(const NumArray& image);

}  // namespace ulm::sim
