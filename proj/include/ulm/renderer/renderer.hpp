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
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ulm/geometry.hpp"
#include "ulm/numerics/array.hpp"

namespace ulm::render {

struct RenderConfig {
  std::size_t factor = 8;   // SR pixels per frame pixel
  double sigma = 1.0;       // in SR pixels
  double truncation = 4.0;  // kernel half-width in units of sigma
  void validate() const;    // ConfigError
};

// Super-resolution density map. Every splat adds weights that are multiples
// of 2^-32 summing to exactly 1, so accumulation is exact and independent of
// order as long as a pixel stays below 2^21 splats.
struct SrMap {
  NumArray grid;  // [H * factor, W * factor]
  std::size_t frame_height = 0;
  std::size_t frame_width = 0;
  RenderConfig config;
  std::size_t frames = 0;
  std::size_t points = 0;

  SrMap(std::size_t frame_height, std::size_t frame_width, const RenderConfig& config);
  double mass() const;
};

// Centroid in frame pixels, within [0, W] x [0, H]; ContractError otherwise.
void splat(SrMap& map, Point centroid);

// Per-frame centroid lists. Frames are split across `threads` partial maps
// that are summed afterwards.
SrMap render_sequence(const std::vector<std::vector<Point>>& frames, std::size_t frame_height,
                      std::size_t frame_width, const RenderConfig& config, std::size_t threads = 1);

// Exact in-place sum; shapes and configs must agree.
void accumulate(SrMap& into, const SrMap& other);

enum class Colormap { gray, hot };
Colormap colormap_from_string(const std::string& name);  // ConfigError

// Max-normalized, gamma-compressed 8-bit PNG bytes.
std::vector<std::uint8_t> encode_image(const SrMap& map, Colormap colormap = Colormap::gray, double gamma = 0.5);
void export_image(const SrMap& map, const std::filesystem::path& path, Colormap colormap = Colormap::gray,
                  double gamma = 0.5);
// float32 raster plus JSON sidecar with the map parameters.
void export_raw(const SrMap& map, const std::filesystem::path& path);

}  // namespace ulm::render
