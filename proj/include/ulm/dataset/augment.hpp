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

#include "ulm/numerics/rng.hpp"
#include "ulm/simulator/simulator.hpp"

namespace ulm::data {

struct AugmentDraw {
  bool hflip = false;
  bool vflip = false;
  double scale = 1.0;  // isotropic, about the frame centre
};

struct AugmentSpec {
  double flip_probability = 0.5;
  double scale_min = 0.8;
  double scale_max = 1.2;
};

AugmentDraw draw_augmentation(const AugmentSpec& spec, Rng& rng);

// Annotations whose centroid leaves the frame after scaling are dropped; the
// remaining boxes are clipped to the frame.
sim::Frame apply_augmentation(const sim::Frame& frame, const AugmentDraw& draw);

sim::Frame augment(const sim::Frame& frame, Rng& rng, const AugmentSpec& spec = {});

}  // namespace ulm::data
