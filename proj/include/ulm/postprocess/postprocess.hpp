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
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ulm/dataset/patches.hpp"
#include "ulm/geometry.hpp"
#include "ulm/numerics/array.hpp"

namespace ulm::post {

struct Detection {
  Point centroid;
  Box box;
  double score = 0.0;
  std::size_t patch = 0;
  std::int64_t frame = 0;
  friend bool operator==(const Detection&, const Detection&) = default;
};

// Queries with p(microbubble) >= threshold, in patch pixels.
// probabilities [Nq, 2], boxes [Nq, 4] normalized (cx, cy, w, h).
std::vector<Detection> extract(const NumArray& probabilities, const NumArray& boxes, double threshold,
                               std::size_t patch_width, std::size_t patch_height, std::size_t patch = 0,
                               std::int64_t frame = 0);

struct MergeSpec {
  double band = 4.0;
  double radius = 3.0;
};

// Maps patch detections to frame pixels and suppresses cross-patch
// duplicates near the shared borders, best score first (ties: lower patch).
// Output is ordered by decreasing score.
std::vector<Detection> merge_patches(const std::array<std::vector<Detection>, data::kPatchCount>& per_patch,
                                     const data::PatchLayout& layout, const MergeSpec& spec = {});

// Whether patches a and b share a border and both frame points lie within
// `band` of it.
bool near_shared_border(const data::PatchLayout& layout, std::size_t a, Point pa, std::size_t b, Point pb,
                        double band);

std::string detection_line(const Detection& d);
void write_detections(const std::filesystem::path& path, const std::vector<Detection>& dets);
std::vector<Detection> read_detections(const std::filesystem::path& path);

}  // namespace ulm::post
