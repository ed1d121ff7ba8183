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

#include "ulm/simulator/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <numbers>

#include "ulm/errors.hpp"

namespace ulm::sim {

double Vessel::length() const {
  double total = 0.0;
  for (std::size_t i = 1; i < control_points.size(); ++i) {
    total += std::hypot(control_points[i].x - control_points[i - 1].x, control_points[i].y - control_points[i - 1].y);
  }
  return total;
}

Point Vessel::position(double arc, double transverse) const {
  if (control_points.size() < 2) throw ContractError("Vessel: needs at least two control points");
  for (std::size_t i = 1; i < control_points.size(); ++i) {
    const Point a = control_points[i - 1], b = control_points[i];
    const double seg = std::hypot(b.x - a.x, b.y - a.y);
    if (arc <= seg || i + 1 == control_points.size()) {
      const double t = seg > 0.0 ? std::clamp(arc / seg, 0.0, 1.0) : 0.0;
      const double nx = seg > 0.0 ? -(b.y - a.y) / seg : 0.0;
      const double ny = seg > 0.0 ? (b.x - a.x) / seg : 0.0;
      return {a.x + t * (b.x - a.x) + transverse * nx, a.y + t * (b.y - a.y) + transverse * ny};
    }
    arc -= seg;
  }
  return control_points.back();
}

double PsfModel::sigma_lateral(double depth, double height) const {
  return lateral_top + (lateral_bottom - lateral_top) * (depth / height);
}

double PsfModel::sigma_axial(double depth, double height) const {
  return axial_top + (axial_bottom - axial_top) * (depth / height);
}

void validate_frame(const Frame& frame) {
  if (frame.image.rank() != 2) throw ContractError("frame: image must be [H, W]");
  const double w = static_cast<double>(frame.width()), h = static_cast<double>(frame.height());
  for (const MbAnnotation& a : frame.annotations) {
    if (!(a.centroid.x >= 0.0 && a.centroid.x < w && a.centroid.y >= 0.0 && a.centroid.y < h)) {
      throw ContractError(fmt::format("frame {}: annotation {} centroid outside image", frame.index, a.id));
    }
    if (!(a.box.w > 0.0 && a.box.h > 0.0)) {
      throw ContractError(fmt::format("frame {}: annotation {} has an empty box", frame.index, a.id));
    }
    if (!a.box.contains(a.centroid)) {
      throw ContractError(fmt::format("frame {}: annotation {} box misses its centroid", frame.index, a.id));
    }
  }
}

namespace {

void validate_spec(const SceneSpec& s) {
  if (s.width == 0 || s.height == 0) throw ConfigError("scene: frame size must be positive");
  if (!(s.radius_min > 0.0) || s.radius_max < s.radius_min) throw ConfigError("scene: need 0 < radius_min <= radius_max");
  if (!(s.speed_min > 0.0) || s.speed_max < s.speed_min) throw ConfigError("scene: need 0 < speed_min <= speed_max");
  if (s.control_points < 2) throw ConfigError("scene: vessels need at least two control points");
  if (!(s.segment_length > 0.0)) throw ConfigError("scene: segment_length must be positive");
  const PsfModel& p = s.psf;
  if (!(p.lateral_top > 0 && p.lateral_bottom > 0 && p.axial_top > 0 && p.axial_bottom > 0)) {
    throw ConfigError("scene: PSF widths must be positive over the whole depth range");
  }
  if (!(p.amplitude > 0.0)) throw ConfigError("scene: PSF amplitude must be positive");
  if (s.noise.sigma < 0.0) throw ConfigError("scene: noise sigma must be non-negative");
  if (s.vessel_count == 0 && s.bubbles_per_frame > 0) throw ConfigError("scene: bubbles need at least one vessel");
  // Inset keeps every bubble (|transverse| <= radius) strictly inside the frame.
  const double inset = s.radius_max + 0.5;
  if (2.0 * inset + 1.0 >= static_cast<double>(std::min(s.width, s.height))) {
    throw ConfigError(fmt::format("scene: a vessel of radius {} cannot fit a {}x{} frame", s.radius_max, s.width,
                                  s.height));
  }
}

Vessel sample_vessel(const SceneSpec& s, Rng& rng) {
  Vessel v;
  v.radius = rng.uniform(s.radius_min, s.radius_max);
  v.flow_speed = rng.uniform(s.speed_min, s.speed_max);
  const double inset = v.radius + 0.5;
  const double x0 = inset, y0 = inset;
  const double x1 = static_cast<double>(s.width) - inset, y1 = static_cast<double>(s.height) - inset;
  auto inside = [&](Point p) { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; };

  Point cur{rng.uniform(x0, x1), rng.uniform(y0, y1)};
  double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
  v.control_points.push_back(cur);
  while (v.control_points.size() < s.control_points) {
    bool placed = false;
    for (int attempt = 0; attempt < 32 && !placed; ++attempt) {
      const double turn = attempt == 0 ? rng.normal(0.0, 0.5) : rng.uniform(-std::numbers::pi, std::numbers::pi);
      const double h = heading + turn;
      const double step = s.segment_length * rng.uniform(0.6, 1.4) * (attempt < 16 ? 1.0 : 0.4);
      const Point next{cur.x + step * std::cos(h), cur.y + step * std::sin(h)};
      if (inside(next)) {
        v.control_points.push_back(next);
        cur = next;
        heading = h;
        placed = true;
      }
    }
    if (!placed) break;
  }
  if (v.control_points.size() < 2) {
    // Degenerate corner case: fall back to a straight chord across the interior.
    v.control_points = {{x0, 0.5 * (y0 + y1)}, {x1, 0.5 * (y0 + y1)}};
  }
  return v;
}

}  // namespace

std::vector<Vessel> build_scene(const SceneSpec& spec, Rng& rng) {
  validate_spec(spec);
  std::vector<Vessel> scene;
  scene.reserve(spec.vessel_count);
  for (std::size_t i = 0; i < spec.vessel_count; ++i) scene.push_back(sample_vessel(spec, rng));
  return scene;
}

BubbleState seed_bubbles(const SceneSpec& spec, const std::vector<Vessel>& scene, Rng& rng) {
  BubbleState state;
  if (spec.bubbles_per_frame > 0 && scene.empty()) throw ConfigError("seed_bubbles: empty scene");
  for (std::size_t i = 0; i < spec.bubbles_per_frame; ++i) {
    Bubble b;
    b.vessel = static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(scene.size()) - 1));
    const Vessel& v = scene[b.vessel];
    b.arc = rng.uniform(0.0, v.length());
    b.transverse = rng.uniform(-v.radius, v.radius);
    b.id = state.next_id++;
    state.bubbles.push_back(b);
  }
  return state;
}

BubbleState advance_bubbles(const std::vector<Vessel>& scene, const BubbleState& state, double dt, Rng& rng) {
  BubbleState next = state;
  for (Bubble& b : next.bubbles) {
    const Vessel& v = scene.at(b.vessel);
    const double len = v.length();
    b.arc += v.flow_speed * dt;
    if (b.arc >= len && len > 0.0) {
      b.arc = std::fmod(b.arc, len);
      b.transverse = rng.uniform(-v.radius, v.radius);
      b.id = next.next_id++;
    }
  }
  return next;
}

Frame render_frame(const std::vector<Vessel>& scene, const BubbleState& state, const PsfModel& psf,
                   const NoiseSpec& noise, std::size_t width, std::size_t height, std::int64_t frame_index, Rng& rng) {
  Frame frame;
  frame.index = frame_index;
  frame.image = NumArray({height, width}, 0.0);
  const double fw = static_cast<double>(width), fh = static_cast<double>(height);
  for (const Bubble& b : state.bubbles) {
    const Point c = scene.at(b.vessel).position(b.arc, b.transverse);
    const double depth = std::clamp(c.y, 0.0, fh);
    const double sx = psf.sigma_lateral(depth, fh), sy = psf.sigma_axial(depth, fh);
    const auto lo_x = static_cast<long>(std::floor(c.x - 6.0 * sx)), hi_x = static_cast<long>(std::ceil(c.x + 6.0 * sx));
    const auto lo_y = static_cast<long>(std::floor(c.y - 6.0 * sy)), hi_y = static_cast<long>(std::ceil(c.y + 6.0 * sy));
    for (long i = std::max(0L, lo_y); i <= std::min(static_cast<long>(height) - 1, hi_y); ++i) {
      const double dy = (static_cast<double>(i) + 0.5 - c.y) / sy;
      for (long j = std::max(0L, lo_x); j <= std::min(static_cast<long>(width) - 1, hi_x); ++j) {
        const double dx = (static_cast<double>(j) + 0.5 - c.x) / sx;
        frame.image.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) +=
            psf.amplitude * std::exp(-0.5 * (dx * dx + dy * dy));
      }
    }
    if (c.x >= 0.0 && c.x < fw && c.y >= 0.0 && c.y < fh) {
      MbAnnotation a;
      a.centroid = c;
      a.id = b.id;
      a.box = clip_box({c.x - 3.0 * sx, c.y - 3.0 * sy, 6.0 * sx, 6.0 * sy}, 0.0, 0.0, fw, fh);
      frame.annotations.push_back(a);
    }
  }
  if (noise.sigma > 0.0) {
    for (double& v : frame.image.data()) v = std::max(0.0, v + rng.normal(0.0, noise.sigma));
  }
  return frame;
}

std::vector<Frame> simulate_sequence(const SceneSpec& spec, std::size_t n_frames, Rng& rng) {
  if (n_frames == 0) throw ContractError("simulate_sequence: need at least one frame");
  Rng scene_rng = rng.split(0), seed_rng = rng.split(1), motion_rng = rng.split(2);
  const auto scene = build_scene(spec, scene_rng);
  BubbleState state = seed_bubbles(spec, scene, seed_rng);
  std::vector<Frame> frames;
  frames.reserve(n_frames);
  for (std::size_t f = 0; f < n_frames; ++f) {
    if (f > 0) state = advance_bubbles(scene, state, spec.dt, motion_rng);
    Rng frame_rng = rng.split(1000 + f);
    frames.push_back(render_frame(scene, state, spec.psf, spec.noise, spec.width, spec.height,
                                  static_cast<std::int64_t>(f), frame_rng));
  }
  return frames;
}

std::vector<Frame> simulate_dataset(const DatasetSpec& spec, Rng& rng) {
  if (spec.frames == 0) throw ConfigError("simulate_dataset: frame count must be positive");
  if (spec.frames_per_clip == 0) throw ConfigError("simulate_dataset: frames_per_clip must be positive");
  if (spec.density_min > spec.density_max) throw ConfigError("simulate_dataset: density_min > density_max");
  std::vector<Frame> frames;
  frames.reserve(spec.frames);
  for (std::size_t clip = 0; frames.size() < spec.frames; ++clip) {
    Rng clip_rng = rng.split(clip);
    SceneSpec scene = spec.scene;
    scene.bubbles_per_frame = static_cast<std::size_t>(clip_rng.integer(
        static_cast<std::int64_t>(spec.density_min), static_cast<std::int64_t>(spec.density_max)));
    const std::size_t n = std::min(spec.frames_per_clip, spec.frames - frames.size());
    Rng seq_rng = clip_rng.split(7);
    for (Frame& f : simulate_sequence(scene, n, seq_rng)) {
      f.index = static_cast<std::int64_t>(frames.size());
      frames.push_back(std::move(f));
    }
  }
  return frames;
}

}  // namespace ulm::sim
