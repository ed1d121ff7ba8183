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
#include <vector>

#include "ulm/geometry.hpp"
#include "ulm/numerics/array.hpp"
#include "ulm/numerics/rng.hpp"

namespace ulm::sim {

/// Piecewise-linear vessel centreline.
struct Vessel {
  std::vector<Point> control_points;
  double radius = 1.0;      // pixels
  double flow_speed = 1.0;  // pixels per frame

  double length() const;
  // Point at arc length `arc` displaced by `transverse` along the segment normal.
  Point position(double arc, double transverse) const;
};

/// Anisotropic Gaussian PSF whose widths vary affinely with depth (row).
struct PsfModel {
  double lateral_top = 1.0;
  double lateral_bottom = 1.6;
  double axial_top = 0.8;
  double axial_bottom = 1.2;
  double amplitude = 1.0;

  // `depth` in pixels, `height` the frame height.
  double sigma_lateral(double depth, double height) const;
  double sigma_axial(double depth, double height) const;
};

struct NoiseSpec {
  double sigma = 0.1;  // additive Gaussian background, then clipped at 0
};

struct MbAnnotation {
  Point centroid;
  Box box;
  std::int64_t id = 0;
  friend bool operator==(const MbAnnotation&, const MbAnnotation&) = default;
};

struct Frame {
  NumArray image;  // [H, W]
  std::vector<MbAnnotation> annotations;
  std::int64_t index = 0;

  std::size_t height() const { return image.dim(0); }
  std::size_t width() const { return image.dim(1); }
};

// Throws ContractError naming the first violated Frame invariant.
void validate_frame(const Frame& frame);

struct SceneSpec {
  std::size_t width = 128;
  std::size_t height = 128;
  std::size_t vessel_count = 6;
  double radius_min = 1.0;
  double radius_max = 2.5;
  double speed_min = 0.5;
  double speed_max = 2.0;
  std::size_t control_points = 6;
  double segment_length = 30.0;
  std::size_t bubbles_per_frame = 10;
  PsfModel psf;
  NoiseSpec noise;
  double dt = 1.0;  // frames advanced between renders
};

struct Bubble {
  std::size_t vessel = 0;
  double arc = 0.0;
  double transverse = 0.0;
  std::int64_t id = 0;
  friend bool operator==(const Bubble&, const Bubble&) = default;
};

struct BubbleState {
  std::vector<Bubble> bubbles;
  std::int64_t next_id = 0;
  friend bool operator==(const BubbleState&, const BubbleState&) = default;
};

/// Samples vessel paths inside the frame, inset by each vessel's radius.
/// Throws ConfigError when the spec cannot fit a vessel.
std::vector<Vessel> build_scene(const SceneSpec& spec, Rng& rng);

/// Places spec.bubbles_per_frame bubbles on random vessels.
BubbleState seed_bubbles(const SceneSpec& spec, const std::vector<Vessel>& scene, Rng& rng);

/// Moves every bubble downstream by flow_speed * dt. Bubbles leaving a
/// vessel re-enter at its inlet with a new id and fresh transverse jitter.
BubbleState advance_bubbles(const std::vector<Vessel>& scene, const BubbleState& state, double dt, Rng& rng);

/// Sum of per-bubble PSFs plus clipped background noise. Bubbles whose
/// centroid lies outside the frame are rendered but not annotated.
Frame render_frame(const std::vector<Vessel>& scene, const BubbleState& state, const PsfModel& psf,
                   const NoiseSpec& noise, std::size_t width, std::size_t height, std::int64_t frame_index, Rng& rng);

/// One temporally coherent clip of `n_frames` frames (indices 0..n-1).
std::vector<Frame> simulate_sequence(const SceneSpec& spec, std::size_t n_frames, Rng& rng);

/// A dataset made of independent clips; each clip draws its bubble density
/// uniformly from [density_min, density_max].
struct DatasetSpec {
  SceneSpec scene;
  std::size_t frames = 600;
  std::size_t frames_per_clip = 20;
  std::size_t density_min = 2;
  std::size_t density_max = 20;
};
std::vector<Frame> simulate_dataset(const DatasetSpec& spec, Rng& rng);

}  // namespace ulm::sim
