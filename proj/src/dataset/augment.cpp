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

#include "ulm/dataset/augment.hpp"

#include <cmath>

#include "ulm/errors.hpp"

namespace ulm::data {

AugmentDraw draw_augmentation(const AugmentSpec& spec, Rng& rng) {
  if (!(spec.scale_min > 0.0) || spec.scale_max < spec.scale_min) {
    throw ConfigError("augment: need 0 < scale_min <= scale_max");
  }
  AugmentDraw d;
  d.hflip = rng.bernoulli(spec.flip_probability);
  d.vflip = rng.bernoulli(spec.flip_probability);
  d.scale = spec.scale_min == spec.scale_max ? spec.scale_min : rng.uniform(spec.scale_min, spec.scale_max);
  return d;
}

namespace {

NumArray flip(const NumArray& img, bool horizontal) {
  const std::size_t h = img.dim(0), w = img.dim(1);
  NumArray out({h, w});
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      out.at(i, j) = horizontal ? img.at(i, w - 1 - j) : img.at(h - 1 - i, j);
    }
  }
  return out;
}

// Output pixel centre q maps back to source position c + (q - c) / s.
NumArray rescale(const NumArray& img, double s) {
  const std::size_t h = img.dim(0), w = img.dim(1);
  const double cx = 0.5 * static_cast<double>(w), cy = 0.5 * static_cast<double>(h);
  auto px = [&](std::ptrdiff_t r, std::ptrdiff_t c) {
    if (r < 0 || c < 0 || r >= static_cast<std::ptrdiff_t>(h) || c >= static_cast<std::ptrdiff_t>(w)) return 0.0;
    return img.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  };
  NumArray out({h, w});
  for (std::size_t i = 0; i < h; ++i) {
    const double sy = cy + (static_cast<double>(i) + 0.5 - cy) / s - 0.5;
    const double fy = std::floor(sy), ty = sy - fy;
    const auto r = static_cast<std::ptrdiff_t>(fy);
    for (std::size_t j = 0; j < w; ++j) {
      const double sx = cx + (static_cast<double>(j) + 0.5 - cx) / s - 0.5;
      const double fx = std::floor(sx), tx = sx - fx;
      const auto c = static_cast<std::ptrdiff_t>(fx);
      out.at(i, j) = (1 - ty) * ((1 - tx) * px(r, c) + tx * px(r, c + 1)) +
                     ty * ((1 - tx) * px(r + 1, c) + tx * px(r + 1, c + 1));
    }
  }
  return out;
}

}  // namespace

sim::Frame apply_augmentation(const sim::Frame& frame, const AugmentDraw& draw) {
  if (!(draw.scale > 0.0)) throw ContractError("augment: scale must be positive");
  const double w = static_cast<double>(frame.width()), h = static_cast<double>(frame.height());
  sim::Frame out{frame.image, {}, frame.index};
  if (draw.hflip) out.image = flip(out.image, true);
  if (draw.vflip) out.image = flip(out.image, false);
  if (draw.scale != 1.0) out.image = rescale(out.image, draw.scale);

  const double cx = 0.5 * w, cy = 0.5 * h, s = draw.scale;
  for (const sim::MbAnnotation& a : frame.annotations) {
    Point c = a.centroid;
    Box b = a.box;
    if (draw.hflip) {
      c.x = w - c.x;
      b.x = w - b.right();
    }
    if (draw.vflip) {
      c.y = h - c.y;
      b.y = h - b.bottom();
    }
    if (s != 1.0) {
      c = {cx + s * (c.x - cx), cy + s * (c.y - cy)};
      b = {cx + s * (b.x - cx), cy + s * (b.y - cy), s * b.w, s * b.h};
    }
    if (!(c.x >= 0.0 && c.x < w && c.y >= 0.0 && c.y < h)) continue;
    b = clip_box(b, 0.0, 0.0, w, h);
    if (!(b.w > 0.0 && b.h > 0.0) || !b.contains(c)) continue;
    out.annotations.push_back({c, b, a.id});
  }
  return out;
}

sim::Frame augment(const sim::Frame& frame, Rng& rng, const AugmentSpec& spec) {
  return apply_augmentation(frame, draw_augmentation(spec, rng));
}

}  // namespace ulm::data
