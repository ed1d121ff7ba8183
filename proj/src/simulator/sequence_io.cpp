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

#include "ulm/simulator/sequence_io.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

#include "ulm/errors.hpp"
#include "ulm/io/files.hpp"

namespace ulm::sim {

namespace fs = std::filesystem;
using nlohmann::json;

std::string frame_stem(std::int64_t index) { return fmt::format("frame_{:06d}", index); }

std::vector<std::uint8_t> preview_png(const NumArray& image) {
  const auto [lo, hi] = std::minmax_element(image.data().begin(), image.data().end());
  const double span = *hi - *lo;
  std::vector<std::uint8_t> px(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const double t = span > 0.0 ? (image[i] - *lo) / span : 0.0;
    px[i] = static_cast<std::uint8_t>(std::lround(255.0 * t));
  }
  return io::encode_png(px, image.dim(1), image.dim(0), 1);
}

void write_sequence(const fs::path& dir, const std::vector<Frame>& frames, bool previews) {
  json gt;
  gt["frames"] = json::array();
  for (const Frame& f : frames) {
    validate_frame(f);
    const std::string stem = frame_stem(f.index);
    io::RawImage raw{f.width(), f.height(), {}};
    raw.pixels.reserve(f.image.size());
    for (double v : f.image.data()) raw.pixels.push_back(static_cast<float>(v));
    io::write_raw_f32(dir / "frames" / (stem + ".f32"), raw, json{{"frame_index", f.index}});
    if (previews) io::write_atomic(dir / "previews" / (stem + ".png"), preview_png(f.image));

    json anns = json::array();
    for (const MbAnnotation& a : f.annotations) {
      anns.push_back({{"id", a.id},
                      {"centroid", {a.centroid.x, a.centroid.y}},
                      {"box", {a.box.x, a.box.y, a.box.w, a.box.h}}});
    }
    gt["frames"].push_back({{"frame_index", f.index},
                            {"file", "frames/" + stem + ".f32"},
                            {"width", f.width()},
                            {"height", f.height()},
                            {"annotations", std::move(anns)}});
  }
  io::write_json(dir / "ground_truth.json", gt);
}

namespace {

std::vector<Frame> parse_ground_truth(const fs::path& dir, bool load_images) {
  const json gt = io::read_json(dir / "ground_truth.json");
  std::vector<Frame> frames;
  try {
    for (const json& jf : gt.at("frames")) {
      Frame f;
      f.index = jf.at("frame_index").get<std::int64_t>();
      const auto w = jf.at("width").get<std::size_t>(), h = jf.at("height").get<std::size_t>();
      if (load_images) {
        const io::RawImage raw = io::read_raw_f32(dir / jf.at("file").get<std::string>());
        if (raw.width != w || raw.height != h) throw IoError("frame " + std::to_string(f.index) + ": size mismatch");
        f.image = NumArray({h, w}, std::vector<double>(raw.pixels.begin(), raw.pixels.end()));
      } else {
        f.image = NumArray({h, w}, 0.0);
      }
      for (const json& ja : jf.at("annotations")) {
        MbAnnotation a;
        a.id = ja.at("id").get<std::int64_t>();
        a.centroid = {ja.at("centroid").at(0).get<double>(), ja.at("centroid").at(1).get<double>()};
        const json& b = ja.at("box");
        a.box = {b.at(0).get<double>(), b.at(1).get<double>(), b.at(2).get<double>(), b.at(3).get<double>()};
        f.annotations.push_back(a);
      }
      validate_frame(f);
      frames.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw IoError(fmt::format("{}: malformed ground truth: {}", (dir / "ground_truth.json").string(), e.what()));
  }
  return frames;
}

}  // namespace

std::vector<Frame> read_sequence(const fs::path& dir) { return parse_ground_truth(dir, true); }
std::vector<Frame> read_ground_truth(const fs::path& dir) { return parse_ground_truth(dir, false); }

}  // namespace ulm::sim
