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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "ulm/geometry.hpp"
#include "ulm/simulator/simulator.hpp"

namespace ulm::data {

struct CocoImage {
  std::int64_t id = 0;
  std::string file_name;
  std::size_t width = 0;
  std::size_t height = 0;
  friend bool operator==(const CocoImage&, const CocoImage&) = default;
};

struct CocoAnnotation {
  std::int64_t id = 0;
  std::int64_t image_id = 0;
  std::int64_t category_id = 1;
  Box bbox;
  double area = 0.0;
  // Not part of the COCO standard; readers that do not know it ignore it.
  Point centroid;
  friend bool operator==(const CocoAnnotation&, const CocoAnnotation&) = default;
};

struct CocoCategory {
  std::int64_t id = 1;
  std::string name = "microbubble";
  friend bool operator==(const CocoCategory&, const CocoCategory&) = default;
};

struct CocoDataset {
  std::vector<CocoImage> images;
  std::vector<CocoAnnotation> annotations;
  std::vector<CocoCategory> categories{CocoCategory{}};
};

// Image ids are frame index + 1 so that id 0 never appears.
std::int64_t image_id_for(std::int64_t frame_index);

CocoDataset to_coco(const std::vector<sim::Frame>& frames);
CocoDataset export_coco(const std::vector<sim::Frame>& frames, const std::filesystem::path& out_path);
CocoDataset import_coco(const std::filesystem::path& path);

nlohmann::json coco_to_json(const CocoDataset& ds);
CocoDataset coco_from_json(const nlohmann::json& j);

// Throws ContractError naming the first violated invariant.
void validate_coco(const CocoDataset& ds);

// Rebuilds per-frame annotation lists (images without pixels) in image order.
std::vector<sim::Frame> frames_from_coco(const CocoDataset& ds);

}  // namespace ulm::data
