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

#include "ulm/pipeline/infer.hpp"

#include <algorithm>
#include <thread>

#include "ulm/dataset/patches.hpp"

namespace ulm::pipe {

std::vector<post::Detection> infer_frame(const det::Detector& detector, const sim::Frame& frame,
                                         const InferConfig& config) {
  const auto layout = data::PatchLayout::for_frame(frame.height(), frame.width());
  sim::Frame bare{frame.image, {}, frame.index};
  const auto patches = data::split_patches(bare, layout);
  std::array<std::vector<post::Detection>, data::kPatchCount> per_patch;
  for (std::size_t p = 0; p < data::kPatchCount; ++p) {
    num::Graph g;
    const num::Var image = g.constant(patches[p].image.reshaped({1, layout.patch_height, layout.patch_width}));
    const auto layers = detector.forward(g, image);
    per_patch[p] = post::extract(layers.back().probabilities.value(), layers.back().boxes.value(), config.threshold,
                                 layout.patch_width, layout.patch_height, p, frame.index);
  }
  return post::merge_patches(per_patch, layout, config.merge);
}

std::vector<post::Detection> infer_frames(const det::Detector& detector, const std::vector<sim::Frame>& frames,
                                          const InferConfig& config, std::size_t threads) {
  std::vector<std::vector<post::Detection>> per_frame(frames.size());
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(frames.size(), 1));
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&, t] {
        for (std::size_t i = t; i < frames.size(); i += threads) per_frame[i] = infer_frame(detector, frames[i], config);
      });
    }
  }
  std::vector<post::Detection> out;
  for (auto& f : per_frame) out.insert(out.end(), f.begin(), f.end());
  return out;
}

std::vector<eval::FrameTruth> truth_of(const std::vector<sim::Frame>& frames) {
  std::vector<eval::FrameTruth> out;
  out.reserve(frames.size());
  for (const sim::Frame& f : frames) {
    eval::FrameTruth t;
    t.frame = f.index;
    for (const sim::MbAnnotation& a : f.annotations) {
      t.boxes.push_back(a.box);
      t.centroids.push_back(a.centroid);
    }
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace ulm::pipe
