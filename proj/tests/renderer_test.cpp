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

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "ulm/errors.hpp"
#include "ulm/io/files.hpp"
#include "ulm/numerics/rng.hpp"
#include "ulm/renderer/renderer.hpp"

using namespace ulm;
using namespace ulm::render;

namespace {

// First moments of the map in SR pixel units, pixel centres at j + 0.5.
Point centre_of_mass(const SrMap& m) {
  double sx = 0.0, sy = 0.0, s = 0.0;
  for (std::size_t r = 0; r < m.grid.dim(0); ++r) {
    for (std::size_t c = 0; c < m.grid.dim(1); ++c) {
      const double v = m.grid.at(r, c);
      sx += v * (static_cast<double>(c) + 0.5);
      sy += v * (static_cast<double>(r) + 0.5);
      s += v;
    }
  }
  return {sx / s, sy / s};
}

Point interior_point(Rng& rng, std::size_t h, std::size_t w) {
  return {rng.uniform(1.0, static_cast<double>(w) - 1.0), rng.uniform(1.0, static_cast<double>(h) - 1.0)};
}

bool same_grid(const SrMap& a, const SrMap& b) {
  return std::equal(a.grid.data().begin(), a.grid.data().end(), b.grid.data().begin(), b.grid.data().end());
}

}  // namespace

TEST_CASE("single splat peaks at its centre with unit mass") {
  SrMap m(16, 16, {});
  splat(m, {8.0 + 0.5 / 8.0, 8.0 + 0.5 / 8.0});  // centre of SR pixel (64, 64)
  std::size_t best = 0;
  for (std::size_t i = 0; i < m.grid.size(); ++i) {
    if (m.grid[i] > m.grid[best]) best = i;
  }
  CHECK(best / m.grid.dim(1) == 64);
  CHECK(best % m.grid.dim(1) == 64);
  CHECK(std::abs(m.mass() - 1.0) < 1e-12);
  CHECK(m.points == 1);
  for (double v : m.grid.data()) CHECK(v >= 0.0);
  // Nothing beyond the truncation radius.
  for (std::size_t r = 0; r < m.grid.dim(0); ++r) {
    for (std::size_t c = 0; c < m.grid.dim(1); ++c) {
      if (std::hypot(static_cast<double>(r) - 64.0, static_cast<double>(c) - 64.0) > 4.0 * std::sqrt(2.0) + 1e-9) {
        CHECK(m.grid.at(r, c) == 0.0);
      }
    }
  }
}

TEST_CASE("splats add exactly") {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const Point a = interior_point(rng, 12, 20), b = interior_point(rng, 12, 20);
    SrMap both(12, 20, {}), ma(12, 20, {}), mb(12, 20, {});
    splat(both, a);
    splat(both, b);
    splat(ma, a);
    splat(mb, b);
    accumulate(ma, mb);
    CHECK(same_grid(both, ma));
  }
}

TEST_CASE("centre of mass tracks fractional centroids") {
  Rng rng(21);
  double worst = 0.0;
  for (int trial = 0; trial < 300; ++trial) {
    RenderConfig cfg;
    cfg.factor = static_cast<std::size_t>(rng.integer(1, 10));
    cfg.sigma = rng.uniform(0.7, 2.5);
    const std::size_t margin = static_cast<std::size_t>(std::ceil(5.0 * cfg.sigma / static_cast<double>(cfg.factor))) + 1;
    SrMap m(2 * margin + 4, 2 * margin + 4, cfg);
    const Point p{rng.uniform(static_cast<double>(margin), static_cast<double>(margin) + 4.0),
                  rng.uniform(static_cast<double>(margin), static_cast<double>(margin) + 4.0)};
    splat(m, p);
    const Point com = centre_of_mass(m);
    const double f = static_cast<double>(cfg.factor);
    worst = std::max({worst, std::abs(com.x - p.x * f), std::abs(com.y - p.y * f)});
    CHECK(std::abs(m.mass() - 1.0) < 1e-12);
  }
  CHECK(worst < 0.01);
}

TEST_CASE("render_sequence counts and commutes") {
  Rng rng(33);
  std::vector<std::vector<Point>> frames(40);
  std::size_t count = 0;
  for (auto& f : frames) {
    for (auto k = rng.integer(0, 12); k > 0; --k) {
      f.push_back(interior_point(rng, 32, 32));
      ++count;
    }
  }
  const SrMap m = render_sequence(frames, 32, 32, {});
  CHECK(m.frames == 40);
  CHECK(m.points == count);
  CHECK(std::abs(m.mass() - static_cast<double>(count)) < 1e-6);

  auto reversed = frames;
  std::reverse(reversed.begin(), reversed.end());
  for (auto& f : reversed) std::reverse(f.begin(), f.end());
  CHECK(same_grid(m, render_sequence(reversed, 32, 32, {})));
  CHECK(same_grid(m, render_sequence(frames, 32, 32, {}, 3)));
  CHECK(same_grid(m, render_sequence(frames, 32, 32, {}, 64)));

  // Union of two halves equals the sum of both renders.
  std::vector<std::vector<Point>> first(frames.begin(), frames.begin() + 17), second(frames.begin() + 17, frames.end());
  SrMap sum = render_sequence(first, 32, 32, {});
  accumulate(sum, render_sequence(second, 32, 32, {}));
  CHECK(same_grid(m, sum));

  const SrMap empty = render_sequence(std::vector<std::vector<Point>>(5), 32, 32, {});
  CHECK(empty.mass() == 0.0);
  CHECK(empty.frames == 5);
  CHECK_THROWS_AS(render_sequence({}, 32, 32, {}), ContractError);
}

TEST_CASE("splat contract") {
  SrMap m(8, 8, {});
  CHECK_THROWS_AS(splat(m, {-0.1, 2.0}), ContractError);
  CHECK_THROWS_AS(splat(m, {2.0, 8.5}), ContractError);
  CHECK_THROWS_AS(splat(m, {std::nan(""), 2.0}), ContractError);
  splat(m, {8.0, 0.0});  // corners are inside, mass clipped
  CHECK(m.mass() < 1.0);
  CHECK_THROWS_AS(SrMap(8, 8, RenderConfig{0, 1.0, 4.0}), ConfigError);
  CHECK_THROWS_AS(SrMap(8, 8, RenderConfig{8, 0.0, 4.0}), ConfigError);
  CHECK_THROWS_AS(colormap_from_string("jet"), ConfigError);
}

TEST_CASE("image export") {
  const auto dir = std::filesystem::temp_directory_path() / "ulm_render_test";
  std::filesystem::remove_all(dir);
  SrMap zero(6, 6, {});
  for (Colormap cm : {Colormap::gray, Colormap::hot}) {
    const auto png = io::decode_png(encode_image(zero, cm));
    CHECK(png.width == 48);
    CHECK(png.height == 48);
    CHECK(std::all_of(png.pixels.begin(), png.pixels.end(), [](std::uint8_t v) { return v == 0; }));
  }

  Rng rng(77);
  std::vector<std::vector<Point>> frames(10);
  for (auto& f : frames) {
    for (int k = 0; k < 5; ++k) f.push_back(interior_point(rng, 6, 6));
  }
  const SrMap m = render_sequence(frames, 6, 6, {});
  for (Colormap cm : {Colormap::gray, Colormap::hot}) {
    const auto ref = encode_image(m, cm);
    const auto decoded = io::decode_png(ref);
    CHECK(*std::max_element(decoded.pixels.begin(), decoded.pixels.end()) == 255);
    for (double c : {1e-6, 0.37, 3.0, 1234.5, rng.uniform(0.01, 100.0)}) {
      SrMap scaled = m;
      for (double& v : scaled.grid.data()) v *= c;
      CHECK(encode_image(scaled, cm) == ref);
    }
  }

  export_image(m, dir / "sr.png");
  export_image(m, dir / "again.png");
  CHECK(io::read_bytes(dir / "sr.png") == io::read_bytes(dir / "again.png"));
  export_raw(m, dir / "sr.f32");
  const auto raw = io::read_raw_f32(dir / "sr.f32");
  CHECK(raw.width == 48);
  CHECK(io::read_json(io::sidecar_path(dir / "sr.f32")).at("points").get<std::size_t>() == 50);

  std::filesystem::create_directories(dir / "blocker");
  io::write_atomic(dir / "blocker" / "file", std::string("x"));
  CHECK_THROWS_AS(export_image(m, dir / "blocker" / "file" / "sr.png"), IoError);
  std::filesystem::remove_all(dir);
}
