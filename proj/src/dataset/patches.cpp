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

#include "ulm/dataset/patches.hpp"

#include <fmt/format.h>

#include "ulm/errors.hpp"

namespace ulm::data {

PatchLayout PatchLayout::for_frame(std::size_t height, std::size_t width) {
  if (height == 0 || width == 0 || height % 2 != 0 || width % 2 != 0) {
    throw ContractError(fmt::format("patches: frame {}x{} must have even, positive dimensions", height, width));
  }
  PatchLayout l;
  l.frame_height = height;
  l.frame_width = width;
  l.patch_height = height / 2;
  l.patch_width = width / 2;
  const double pw = static_cast<double>(l.patch_width), ph = static_cast<double>(l.patch_height);
  l.offsets = {Point{0.0, 0.0}, Point{pw, 0.0}, Point{0.0, ph}, Point{pw, ph}};
  return l;
}

Point PatchLayout::to_frame(std::size_t patch, Point p) const {
  return {p.x + offsets.at(patch).x, p.y + offsets.at(patch).y};
}

Box PatchLayout::to_frame(std::size_t patch, const Box& b) const {
  return {b.x + offsets.at(patch).x, b.y + offsets.at(patch).y, b.w, b.h};
}

std::array<sim::Frame, kPatchCount> split_patches(const sim::Frame& frame, const PatchLayout& layout) {
  if (frame.height() != layout.frame_height || frame.width() != layout.frame_width) {
    throw DimensionError(fmt::format("split_patches: frame {}x{} does not match layout {}x{}", frame.height(),
                                     frame.width(), layout.frame_height, layout.frame_width));
  }
  const std::size_t ph = layout.patch_height, pw = layout.patch_width, w = layout.frame_width;
  std::array<sim::Frame, kPatchCount> out;
  for (std::size_t p = 0; p < kPatchCount; ++p) {
    const Point off = layout.offsets[p];
    const auto r0 = static_cast<std::size_t>(off.y), c0 = static_cast<std::size_t>(off.x);
    NumArray img({ph, pw});
    const double* src = frame.image.ptr();
    double* dst = img.ptr();
    for (std::size_t i = 0; i < ph; ++i) {
      for (std::size_t j = 0; j < pw; ++j) dst[i * pw + j] = src[(r0 + i) * w + c0 + j];
    }
    sim::Frame patch{std::move(img), {}, frame.index};
    const Box region{off.x, off.y, static_cast<double>(pw), static_cast<double>(ph)};
    for (const sim::MbAnnotation& a : frame.annotations) {
      if (intersection_area(a.box, region) <= 0.0) continue;
      const Box clipped = clip_box(a.box, region.x, region.y, region.right(), region.bottom());
      const bool inside = a.centroid.x >= region.x && a.centroid.x < region.right() && a.centroid.y >= region.y &&
                          a.centroid.y < region.bottom();
      const Point c = inside ? a.centroid : clipped.center();
      patch.annotations.push_back(
          {Point{c.x - off.x, c.y - off.y}, Box{clipped.x - off.x, clipped.y - off.y, clipped.w, clipped.h}, a.id});
    }
    out[p] = std::move(patch);
  }
  return out;
}

}  // namespace ulm::data
