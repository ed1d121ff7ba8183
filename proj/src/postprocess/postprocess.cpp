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

#include "ulm/postprocess/postprocess.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "ulm/errors.hpp"
#include "ulm/io/files.hpp"

namespace ulm::post {

using nlohmann::json;

std::vector<Detection> extract(const NumArray& probabilities, const NumArray& boxes, double threshold,
                               std::size_t patch_width, std::size_t patch_height, std::size_t patch,
                               std::int64_t frame) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ContractError("extract: threshold must lie in (0, 1)");
  if (probabilities.rank() != 2 || probabilities.dim(1) != 2 || boxes.rank() != 2 || boxes.dim(1) != 4 ||
      boxes.dim(0) != probabilities.dim(0)) {
    throw DimensionError("extract: expected probabilities [Nq, 2] and boxes [Nq, 4]");
  }
  const double pw = static_cast<double>(patch_width), ph = static_cast<double>(patch_height);
  std::vector<Detection> out;
  for (std::size_t q = 0; q < boxes.dim(0); ++q) {
    const double p = probabilities[2 * q];
    if (p < threshold) continue;
    const CenterBox cb{boxes[4 * q] * pw, boxes[4 * q + 1] * ph, boxes[4 * q + 2] * pw, boxes[4 * q + 3] * ph};
    out.push_back({Point{cb.cx, cb.cy}, to_corner(cb), p, patch, frame});
  }
  return out;
}

bool near_shared_border(const data::PatchLayout& layout, std::size_t a, Point pa, std::size_t b, Point pb,
                        double band) {
  const double mx = static_cast<double>(layout.patch_width), my = static_cast<double>(layout.patch_height);
  const std::size_t ra = a / 2, ca = a % 2, rb = b / 2, cb = b % 2;
  if (ra == rb && ca != cb) return std::abs(pa.x - mx) <= band && std::abs(pb.x - mx) <= band;
  if (ca == cb && ra != rb) return std::abs(pa.y - my) <= band && std::abs(pb.y - my) <= band;
  if (ra != rb && ca != cb) {
    return std::hypot(pa.x - mx, pa.y - my) <= band && std::hypot(pb.x - mx, pb.y - my) <= band;
  }
  return false;
}

std::vector<Detection> merge_patches(const std::array<std::vector<Detection>, data::kPatchCount>& per_patch,
                                     const data::PatchLayout& layout, const MergeSpec& spec) {
  if (!(spec.band >= 0.0)) throw ContractError("merge_patches: band must be non-negative");
  if (!(spec.radius > 0.0)) throw ContractError("merge_patches: radius must be positive");
  std::vector<Detection> all;
  for (std::size_t p = 0; p < data::kPatchCount; ++p) {
    for (Detection d : per_patch[p]) {
      d.patch = p;
      d.centroid = layout.to_frame(p, d.centroid);
      d.box = layout.to_frame(p, d.box);
      all.push_back(d);
    }
  }
  std::stable_sort(all.begin(), all.end(), [](const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.patch < b.patch;
  });
  std::vector<Detection> kept;
  for (const Detection& d : all) {
    bool duplicate = false;
    for (const Detection& k : kept) {
      if (k.patch == d.patch) continue;
      if (std::hypot(k.centroid.x - d.centroid.x, k.centroid.y - d.centroid.y) > spec.radius) continue;
      if (near_shared_border(layout, k.patch, k.centroid, d.patch, d.centroid, spec.band)) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) kept.push_back(d);
  }
  return kept;
}

std::string detection_line(const Detection& d) {
  json j{{"frame", d.frame}, {"x", d.box.x},         {"y", d.box.y},         {"w", d.box.w},
         {"h", d.box.h},     {"cx", d.centroid.x}, {"cy", d.centroid.y}, {"score", d.score}};
  return j.dump();
}

void write_detections(const std::filesystem::path& path, const std::vector<Detection>& dets) {
  std::string text;
  for (const Detection& d : dets) {
    text += detection_line(d);
    text += '\n';
  }
  io::write_atomic(path, text);
}

std::vector<Detection> read_detections(const std::filesystem::path& path) {
  std::istringstream in(io::read_text(path));
  std::vector<Detection> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      Detection d;
      d.frame = j.at("frame").get<std::int64_t>();
      d.box = {j.at("x").get<double>(), j.at("y").get<double>(), j.at("w").get<double>(), j.at("h").get<double>()};
      d.centroid = {j.at("cx").get<double>(), j.at("cy").get<double>()};
      d.score = j.at("score").get<double>();
      out.push_back(d);
    } catch (const json::exception& e) {
      throw IoError(fmt::format("{}:{}: bad detection record ({})", path.string(), lineno, e.what()));
    }
  }
  return out;
}

}  // namespace ulm::post
