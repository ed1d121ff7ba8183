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

#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <map>

#include "ulm/errors.hpp"
#include "ulm/simulator/sequence_io.hpp"
#include "ulm/simulator/simulator.hpp"

using namespace ulm;
using namespace ulm::sim;

namespace {

std::pair<std::size_t, std::size_t> argmax(const NumArray& img) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < img.size(); ++i) {
    if (img[i] > img[best]) best = i;
  }
  return {best / img.dim(1), best % img.dim(1)};
}

}  // namespace

TEST_CASE("build_scene") {
  SceneSpec spec;
  SUBCASE("zero vessels") {
    spec.vessel_count = 0;
    spec.bubbles_per_frame = 0;
    Rng rng(1);
    CHECK(build_scene(spec, rng).empty());
  }
  SUBCASE("deterministic per seed") {
    Rng a(7), b(7);
    auto sa = build_scene(spec, a), sb = build_scene(spec, b);
    REQUIRE(sa.size() == sb.size());
    for (std::size_t i = 0; i < sa.size(); ++i) {
      CHECK(sa[i].control_points == sb[i].control_points);
      CHECK(sa[i].radius == sb[i].radius);
    }
  }
  SUBCASE("paths stay within the frame inflated by radius") {
    spec.vessel_count = 10;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(seed);
      for (const Vessel& v : build_scene(spec, rng)) {
        CHECK(v.control_points.size() >= 2);
        CHECK(v.radius > 0.0);
        CHECK(v.flow_speed > 0.0);
        const double len = v.length();
        for (int k = 0; k <= 400; ++k) {
          const Point p = v.position(len * k / 400.0, 0.0);
          CHECK(p.x >= -v.radius);
          CHECK(p.x <= 128.0 + v.radius);
          CHECK(p.y >= -v.radius);
          CHECK(p.y <= 128.0 + v.radius);
        }
      }
    }
  }
  SUBCASE("infeasible specs are configuration errors") {
    Rng rng(1);
    SceneSpec tiny = spec;
    tiny.width = tiny.height = 6;
    tiny.radius_max = 3.0;
    CHECK_THROWS_AS(build_scene(tiny, rng), ConfigError);
    SceneSpec bad = spec;
    bad.speed_min = 0.0;
    CHECK_THROWS_AS(build_scene(bad, rng), ConfigError);
    bad = spec;
    bad.psf.axial_bottom = -0.1;
    CHECK_THROWS_AS(build_scene(bad, rng), ConfigError);
  }
}

TEST_CASE("advance_bubbles") {
  SUBCASE("dt = 0 leaves the state unchanged") {
    SceneSpec spec;
    Rng rng(3);
    auto scene = build_scene(spec, rng);
    auto state = seed_bubbles(spec, scene, rng);
    CHECK(advance_bubbles(scene, state, 0.0, rng) == state);
  }
  SUBCASE("straight horizontal vessel at unit speed") {
    std::vector<Vessel> scene{Vessel{{{10, 40}, {110, 40}}, 2.0, 1.0}};
    BubbleState state;
    state.bubbles.push_back({0, 20.0, 0.0, 0});
    state.next_id = 1;
    Rng rng(1);
    const Point before = scene[0].position(state.bubbles[0].arc, 0.0);
    const Point after = scene[0].position(advance_bubbles(scene, state, 5.0, rng).bubbles[0].arc, 0.0);
    CHECK(after.x - before.x == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(after.y == before.y);
  }
  SUBCASE("per-vessel counts survive 1000 steps") {
    SceneSpec spec;
    spec.bubbles_per_frame = 15;
    Rng rng(9);
    auto scene = build_scene(spec, rng);
    auto state = seed_bubbles(spec, scene, rng);
    auto count = [&](const BubbleState& s) {
      std::map<std::size_t, int> c;
      for (const Bubble& b : s.bubbles) ++c[b.vessel];
      return c;
    };
    const auto initial = count(state);
    for (int step = 0; step < 1000; ++step) state = advance_bubbles(scene, state, 1.0, rng);
    CHECK(count(state) == initial);
  }
}

TEST_CASE("render_frame") {
  const PsfModel psf;
  const NoiseSpec off{0.0};
  std::vector<Vessel> scene{Vessel{{{8, 20}, {120, 100}}, 2.0, 1.0}};
  Rng rng(5);
  SUBCASE("single bubble peaks at its centroid") {
    for (double arc : {10.3, 47.9, 90.05}) {
      BubbleState s;
      s.bubbles.push_back({0, arc, 0.7, 0});
      Frame f = render_frame(scene, s, psf, off, 128, 128, 0, rng);
      REQUIRE(f.annotations.size() == 1);
      auto [r, c] = argmax(f.image);
      CHECK(std::abs(static_cast<double>(c) + 0.5 - f.annotations[0].centroid.x) <= 0.5);
      CHECK(std::abs(static_cast<double>(r) + 0.5 - f.annotations[0].centroid.y) <= 0.5);
    }
  }
  SUBCASE("empty scene renders black") {
    Frame f = render_frame(scene, BubbleState{}, psf, off, 64, 48, 3, rng);
    CHECK(f.image == NumArray({48, 64}, 0.0));
    CHECK(f.annotations.empty());
    CHECK(f.index == 3);
  }
  SUBCASE("superposition of separated bubbles") {
    BubbleState a, b, ab;
    a.bubbles.push_back({0, 15.0, 0.0, 0});
    b.bubbles.push_back({0, 100.0, -1.0, 1});
    ab.bubbles = {a.bubbles[0], b.bubbles[0]};
    const NumArray fa = render_frame(scene, a, psf, off, 128, 128, 0, rng).image;
    const NumArray fb = render_frame(scene, b, psf, off, 128, 128, 0, rng).image;
    const NumArray fab = render_frame(scene, ab, psf, off, 128, 128, 0, rng).image;
    double worst = 0.0;
    for (std::size_t i = 0; i < fab.size(); ++i) worst = std::max(worst, std::abs(fab[i] - fa[i] - fb[i]));
    CHECK(worst < 1e-12);
  }
  SUBCASE("boxes span three sigma and contain the centroid") {
    BubbleState s;
    s.bubbles.push_back({0, 60.0, 0.0, 0});
    Frame f = render_frame(scene, s, psf, off, 128, 128, 0, rng);
    const auto& a = f.annotations.at(0);
    const double sx = psf.sigma_lateral(a.centroid.y, 128.0);
    CHECK(a.box.w == doctest::Approx(6.0 * sx));
    CHECK(a.box.contains(a.centroid));
  }
}

TEST_CASE("simulate_sequence") {
  SceneSpec spec;
  SUBCASE("one frame") {
    Rng rng(1);
    auto frames = simulate_sequence(spec, 1, rng);
    REQUIRE(frames.size() == 1);
    validate_frame(frames[0]);
  }
  SUBCASE("bit-identical for equal seeds") {
    Rng a(42), b(42);
    auto fa = simulate_sequence(spec, 5, a), fb = simulate_sequence(spec, 5, b);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(fa[i].image == fb[i].image);
      CHECK(fa[i].annotations == fb[i].annotations);
    }
  }
  SUBCASE("mean bubble count tracks the configured density") {
    spec.bubbles_per_frame = 12;
    Rng rng(77);
    auto frames = simulate_sequence(spec, 200, rng);
    double total = 0.0;
    for (const Frame& f : frames) total += static_cast<double>(f.annotations.size());
    CHECK(std::abs(total / 200.0 - 12.0) <= 1.2);
  }
  SUBCASE("bubbles move smoothly between frames") {
    spec.bubbles_per_frame = 5;
    Rng rng(4);
    auto frames = simulate_sequence(spec, 30, rng);
    for (std::size_t f = 1; f < frames.size(); ++f) {
      for (const auto& a : frames[f].annotations) {
        for (const auto& p : frames[f - 1].annotations) {
          if (p.id == a.id) CHECK(std::hypot(a.centroid.x - p.centroid.x, a.centroid.y - p.centroid.y) <= spec.speed_max + 2.0 * spec.radius_max + 1e-9);
        }
      }
    }
  }
  SUBCASE("zero frames is a contract error") {
    Rng rng(1);
    CHECK_THROWS_AS(simulate_sequence(spec, 0, rng), ContractError);
  }
}

TEST_CASE("frame invariants hold across random specs") {
  Rng meta(2024);
  for (int trial = 0; trial < 100; ++trial) {
    SceneSpec s;
    s.width = static_cast<std::size_t>(meta.integer(24, 96));
    s.height = static_cast<std::size_t>(meta.integer(24, 96));
    s.vessel_count = static_cast<std::size_t>(meta.integer(1, 8));
    s.radius_min = meta.uniform(0.3, 2.0);
    s.radius_max = s.radius_min + meta.uniform(0.0, 2.0);
    s.speed_min = meta.uniform(0.1, 2.0);
    s.speed_max = s.speed_min + meta.uniform(0.0, 3.0);
    s.control_points = static_cast<std::size_t>(meta.integer(2, 8));
    s.segment_length = meta.uniform(5.0, 40.0);
    s.bubbles_per_frame = static_cast<std::size_t>(meta.integer(0, 25));
    s.noise.sigma = meta.uniform(0.0, 0.2);
    Rng rng = meta.split(static_cast<std::uint64_t>(trial));
    for (const Frame& f : simulate_sequence(s, 4, rng)) {
      CHECK_NOTHROW(validate_frame(f));
      for (double v : f.image.data()) CHECK(v >= 0.0);
    }
  }
}

TEST_CASE("simulate_dataset covers the density range and indexes frames globally") {
  DatasetSpec spec;
  spec.frames = 45;
  spec.frames_per_clip = 10;
  Rng rng(3);
  auto frames = simulate_dataset(spec, rng);
  REQUIRE(frames.size() == 45);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    CHECK(frames[i].index == static_cast<std::int64_t>(i));
    CHECK(frames[i].annotations.size() >= 2);
    CHECK(frames[i].annotations.size() <= 20);
  }
}

TEST_CASE("sequence files round-trip") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "ulm_sim_io_test";
  fs::remove_all(dir);
  SceneSpec spec;
  spec.width = 32;
  spec.height = 24;
  spec.bubbles_per_frame = 3;
  Rng rng(8);
  auto frames = simulate_sequence(spec, 3, rng);
  write_sequence(dir, frames, true);
  CHECK(fs::exists(dir / "previews" / "frame_000002.png"));
  auto back = read_sequence(dir);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].annotations == frames[i].annotations);
    for (std::size_t p = 0; p < frames[i].image.size(); ++p) {
      CHECK(back[i].image[p] == static_cast<double>(static_cast<float>(frames[i].image[p])));
    }
  }
  fs::remove_all(dir);
}
