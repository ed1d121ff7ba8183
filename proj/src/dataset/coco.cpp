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

#include "ulm/dataset/coco.hpp"

#include <fmt/format.h>

#include <set>
#include <unordered_map>

#include "ulm/errors.hpp"
#include "ulm/io/files.hpp"
#include "ulm/simulator/sequence_io.hpp"

namespace ulm::data {

using nlohmann::json;

std::int64_t image_id_for(std::int64_t frame_index) { return frame_index + 1; }

CocoDataset to_coco(const std::vector<sim::Frame>& frames) {
  CocoDataset ds;
  std::int64_t next_ann = 1;
  for (const sim::Frame& f : frames) {
    sim::validate_frame(f);
    const std::int64_t img = image_id_for(f.index);
    ds.images.push_back({img, "frames/" + sim::frame_stem(f.index) + ".f32", f.width(), f.height()});
    for (const sim::MbAnnotation& a : f.annotations) {
      ds.annotations.push_back({next_ann++, img, 1, a.box, a.box.w * a.box.h, a.centroid});
    }
  }
  validate_coco(ds);
  return ds;
}

CocoDataset export_coco(const std::vector<sim::Frame>& frames, const std::filesystem::path& out_path) {
  CocoDataset ds = to_coco(frames);
  io::write_json(out_path, coco_to_json(ds));
  return ds;
}

CocoDataset import_coco(const std::filesystem::path& path) {
  CocoDataset ds = coco_from_json(io::read_json(path));
  validate_coco(ds);
  return ds;
}

json coco_to_json(const CocoDataset& ds) {
  json images = json::array(), anns = json::array(), cats = json::array();
  for (const CocoImage& im : ds.images) {
    images.push_back({{"id", im.id}, {"file_name", im.file_name}, {"width", im.width}, {"height", im.height}});
  }
  for (const CocoAnnotation& a : ds.annotations) {
    anns.push_back({{"id", a.id},
                    {"image_id", a.image_id},
                    {"category_id", a.category_id},
                    {"bbox", {a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h}},
                    {"area", a.area},
                    {"iscrowd", 0},
                    {"centroid", {a.centroid.x, a.centroid.y}}});
  }
  for (const CocoCategory& c : ds.categories) cats.push_back({{"id", c.id}, {"name", c.name}});
  return {{"images", images}, {"annotations", anns}, {"categories", cats}};
}

CocoDataset coco_from_json(const json& j) {
  try {
    CocoDataset ds;
    ds.categories.clear();
    for (const json& im : j.at("images")) {
      ds.images.push_back({im.at("id").get<std::int64_t>(), im.at("file_name").get<std::string>(),
                           im.at("width").get<std::size_t>(), im.at("height").get<std::size_t>()});
    }
    for (const json& a : j.at("annotations")) {
      const json& b = a.at("bbox");
      if (b.size() != 4) throw IoError("coco: bbox must have four entries");
      CocoAnnotation ann{a.at("id").get<std::int64_t>(), a.at("image_id").get<std::int64_t>(),
                         a.at("category_id").get<std::int64_t>(),
                         Box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()},
                         a.at("area").get<double>(), Point{}};
      if (a.contains("centroid")) {
        ann.centroid = {a["centroid"].at(0).get<double>(), a["centroid"].at(1).get<double>()};
      } else {
        ann.centroid = ann.bbox.center();
      }
      ds.annotations.push_back(ann);
    }
    for (const json& c : j.at("categories")) {
      ds.categories.push_back({c.at("id").get<std::int64_t>(), c.at("name").get<std::string>()});
    }
    return ds;
  } catch (const json::exception& e) {
    throw IoError(fmt::format("coco: malformed dataset ({})", e.what()));
  }
}

void validate_coco(const CocoDataset& ds) {
  std::unordered_map<std::int64_t, const CocoImage*> images;
  for (const CocoImage& im : ds.images) {
    if (!images.emplace(im.id, &im).second) throw ContractError(fmt::format("coco: duplicate image id {}", im.id));
  }
  std::set<std::int64_t> cat_ids;
  for (const CocoCategory& c : ds.categories) {
    if (!cat_ids.insert(c.id).second) throw ContractError(fmt::format("coco: duplicate category id {}", c.id));
  }
  std::set<std::int64_t> ann_ids;
  for (const CocoAnnotation& a : ds.annotations) {
    if (!ann_ids.insert(a.id).second) throw ContractError(fmt::format("coco: duplicate annotation id {}", a.id));
    auto it = images.find(a.image_id);
    if (it == images.end()) throw ContractError(fmt::format("coco: annotation {} references missing image", a.id));
    if (!cat_ids.contains(a.category_id)) {
      throw ContractError(fmt::format("coco: annotation {} references missing category", a.id));
    }
    const CocoImage& im = *it->second;
    const Box& b = a.bbox;
    if (!(b.x >= 0.0 && b.y >= 0.0 && b.w >= 0.0 && b.h >= 0.0 && b.x + b.w <= static_cast<double>(im.width) &&
          b.y + b.h <= static_cast<double>(im.height))) {
      throw ContractError(fmt::format("coco: annotation {} bbox outside image {}", a.id, im.id));
    }
  }
}

std::vector<sim::Frame> frames_from_coco(const CocoDataset& ds) {
  std::vector<sim::Frame> frames;
  std::unordered_map<std::int64_t, std::size_t> slot;
  for (const CocoImage& im : ds.images) {
    slot[im.id] = frames.size();
    sim::Frame f;
    f.index = im.id - 1;
    f.image = NumArray({im.height, im.width}, 0.0);
    frames.push_back(std::move(f));
  }
  for (const CocoAnnotation& a : ds.annotations) {
    frames.at(slot.at(a.image_id)).annotations.push_back({a.centroid, a.bbox, a.id});
  }
  return frames;
}

}  // namespace ulm::data
