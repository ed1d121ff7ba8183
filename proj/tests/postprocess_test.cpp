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
#include <functional>

#include "ulm/dataset/patches.hpp"
#include "ulm/errors.hpp"
#include "ulm/io/files.hpp"
#include "ulm/numerics/rng.hpp"
#include "ulm/postprocess/postprocess.hpp"

using namespace ulm;
using namespace ulm::post;

namespace {

NumArray no_object_probs(std::size_t nq) {
  NumArray p({nq, 2});
  for (std::size_t q = 0; q < nq; ++q) {
    p[2 * q] = 0.01;
    p[2 * q + 1] = 0.99;
  }
  return p;
}

Detection at(double x, double y, double score) {
  return {Point{x, y}, Box{x - 2.0, y - 2.0, 4.0, 4.0}, score, 0, 0};
}

using PerPatch = std::array<std::vector<Detection>, data::kPatchCount>;

// Distance from a frame point to the boundary shared by two patches: a
// segment for edge neighbours, the centre corner for diagonal ones.
double distance_to_shared_boundary(const data::PatchLayout& l, std::size_t a, std::size_t b, Point p) {
  const double mx = static_cast<double>(l.patch_width), my = static_cast<double>(l.patch_height);
  const double w = static_cast<double>(l.frame_width), h = static_cast<double>(l.frame_height);
  auto seg = [&](double x0, double y0, double x1, double y1) {
    const double cx = std::clamp(p.x, x0, x1), cy = std::clamp(p.y, y0, y1);
    return std::hypot(p.x - cx, p.y - cy);
  };
  const std::size_t lo = std::min(a, b), hi = std::max(a, b);
  if (lo == 0 && hi == 1) return seg(mx, 0, mx, my);
  if (lo == 2 && hi == 3) return seg(mx, my, mx, h);
  if (lo == 0 && hi == 2) return seg(0, my, mx, my);
  if (lo == 1 && hi == 3) return seg(mx, my, w, my);
  return seg(mx, my, mx, my);
}

bool conflicts(const data::PatchLayout& l, const Detection& u, const Detection& v, double band, double radius) {
  if (u.patch == v.patch) return false;
  if (std::hypot(u.centroid.x - v.centroid.x, u.centroid.y - v.centroid.y) > radius) return false;
  return distance_to_shared_boundary(l, u.patch, v.patch, u.centroid) <= band &&
         distance_to_shared_boundary(l, u.patch, v.patch, v.centroid) <= band;
}

// u outranks v: higher score, ties to the lower patch, then input order.
bool outranks(const Detection& u, std::size_t iu, const Detection& v, std::size_t iv) {
  if (u.score != v.score) return u.score > v.score;
  if (u.patch != v.patch) return u.patch < v.patch;
  return iu < iv;
}

// Reference survivor set: a detection survives iff no surviving detection
// that outranks it conflicts with it (resolved recursively from scratch).
std::vector<Detection> clustering_oracle(const PerPatch& per_patch, const data::PatchLayout& l, double band,
                                         double radius) {
  std::vector<Detection> all;
  for (std::size_t p = 0; p < data::kPatchCount; ++p) {
    for (Detection d : per_patch[p]) {
      d.patch = p;
      d.centroid = {d.centroid.x + l.offsets[p].x, d.centroid.y + l.offsets[p].y};
      d.box = {d.box.x + l.offsets[p].x, d.box.y + l.offsets[p].y, d.box.w, d.box.h};
      all.push_back(d);
    }
  }
  const std::size_t n = all.size();
  std::vector<int> state(n, -1);  // -1 unknown, 0 suppressed, 1 kept
  std::function<int(std::size_t)> resolve = [&](std::size_t i) -> int {
    if (state[i] >= 0) return state[i];
    int s = 1;
    for (std::size_t j = 0; j < n && s == 1; ++j) {
      if (j != i && outranks(all[j], j, all[i], i) && conflicts(l, all[i], all[j], band, radius) && resolve(j) == 1) {
        s = 0;
      }
    }
    return state[i] = s;
  };
  std::vector<Detection> kept;
  for (std::size_t i = 0; i < n; ++i) {
    if (resolve(i) == 1) kept.push_back(all[i]);
  }
  return kept;
}

PerPatch random_border_scene(Rng& rng, const data::PatchLayout& l) {
  PerPatch out;
  const std::size_t n = static_cast<std::size_t>(rng.integer(0, 30));
  const double mx = static_cast<double>(l.patch_width), my = static_cast<double>(l.patch_height);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t p = static_cast<std::size_t>(rng.integer(0, 3));
    // Bias positions toward the shared borders.
    double x = rng.bernoulli(0.6) ? (p % 2 == 0 ? mx - rng.uniform(0, 6) : rng.uniform(0, 6)) : rng.uniform(0, mx);
    double y = rng.bernoulli(0.6) ? (p / 2 == 0 ? my - rng.uniform(0, 6) : rng.uniform(0, 6)) : rng.uniform(0, my);
    const double score = rng.bernoulli(0.2) ? 0.75 : rng.uniform(0.5, 1.0);
    out[p].push_back(at(x, y, score));
  }
  return out;
}

}  // namespace

TEST_CASE("extract keeps confident queries in patch pixels") {
  NumArray boxes({5, 4});
  for (double& v : boxes.data()) v = 0.3;
  CHECK(extract(no_object_probs(5), boxes, 0.5, 64, 64).empty());

  NumArray probs = no_object_probs(5);
  probs[2 * 3] = 0.9;
  probs[2 * 3 + 1] = 0.1;
  boxes[12] = 0.5;
  boxes[13] = 0.5;
  boxes[14] = 0.1;
  boxes[15] = 0.1;
  const auto dets = extract(probs, boxes, 0.5, 64, 64, 2, 7);
  REQUIRE(dets.size() == 1);
  CHECK(dets[0].centroid.x == doctest::Approx(32.0).epsilon(1e-12));
  CHECK(dets[0].centroid.y == doctest::Approx(32.0).epsilon(1e-12));
  CHECK(dets[0].box.w == doctest::Approx(6.4));
  CHECK(dets[0].box.x == doctest::Approx(28.8));
  CHECK(dets[0].score == 0.9);
  CHECK(dets[0].patch == 2);
  CHECK(dets[0].frame == 7);

  CHECK_THROWS_AS(extract(probs, boxes, 0.0, 64, 64), ContractError);
  CHECK_THROWS_AS(extract(probs, boxes, 1.0, 64, 64), ContractError);
  CHECK_THROWS_AS(extract(probs, NumArray({4, 4}), 0.5, 64, 64), DimensionError);
}

TEST_CASE("extract count is non-increasing in the threshold") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t nq = static_cast<std::size_t>(rng.integer(1, 30));
    NumArray probs({nq, 2}), boxes({nq, 4});
    for (std::size_t q = 0; q < nq; ++q) {
      probs[2 * q] = rng.uniform();
      probs[2 * q + 1] = 1.0 - probs[2 * q];
      for (std::size_t k = 0; k < 4; ++k) boxes[4 * q + k] = rng.uniform();
    }
    std::size_t previous = nq + 1;
    for (double t = 0.05; t < 1.0; t += 0.05) {
      const std::size_t count = extract(probs, boxes, t, 64, 64).size();
      CHECK(count <= previous);
      std::size_t expected = 0;
      for (std::size_t q = 0; q < nq; ++q) expected += probs[2 * q] >= t ? 1 : 0;
      CHECK(count == expected);
      previous = count;
    }
  }
}

TEST_CASE("merge_patches maps interior detections unchanged") {
  const auto layout = data::PatchLayout::for_frame(128, 128);
  PerPatch per;
  per[0] = {at(10, 10, 0.9), at(40, 20, 0.8)};
  per[1] = {at(30, 30, 0.7)};
  per[3] = {at(20, 50, 0.6)};
  const auto merged = merge_patches(per, layout);
  REQUIRE(merged.size() == 4);
  CHECK(merged[0].centroid == Point{10, 10});
  CHECK(merged[1].centroid == Point{40, 20});
  CHECK(merged[2].centroid == Point{94, 30});
  CHECK(merged[2].patch == 1);
  CHECK(merged[3].centroid == Point{84, 114});
  CHECK(merged[3].box.x == doctest::Approx(82.0));
}

TEST_CASE("merge_patches removes a straddling duplicate") {
  const auto layout = data::PatchLayout::for_frame(128, 128);
  for (int swap = 0; swap < 2; ++swap) {
    PerPatch per;
    per[0] = {at(63.4, 30, swap ? 0.6 : 0.9)};
    per[1] = {at(64.6 - 64.0, 30, swap ? 0.9 : 0.6)};
    const auto merged = merge_patches(per, layout, {4.0, 3.0});
    REQUIRE(merged.size() == 1);
    CHECK(merged[0].score == 0.9);
    CHECK(merged[0].patch == (swap ? 1u : 0u));
  }
  SUBCASE("equal scores keep the lower patch") {
    PerPatch per;
    per[2] = {at(63.0, 1.0, 0.7)};
    per[1] = {at(1.0, 63.0, 0.7)};
    const auto merged = merge_patches(per, layout);
    REQUIRE(merged.size() == 1);
    CHECK(merged[0].patch == 1);
  }
  SUBCASE("same patch pairs are left alone") {
    PerPatch per;
    per[0] = {at(63.0, 30, 0.9), at(62.0, 30, 0.8)};
    CHECK(merge_patches(per, layout).size() == 2);
  }
  SUBCASE("far apart along the border survive") {
    PerPatch per;
    per[0] = {at(63.0, 10, 0.9)};
    per[1] = {at(1.0, 20, 0.8)};
    CHECK(merge_patches(per, layout).size() == 2);
  }
  CHECK_THROWS_AS(merge_patches({}, layout, {-1.0, 3.0}), ContractError);
  CHECK_THROWS_AS(merge_patches({}, layout, {4.0, 0.0}), ContractError);
}

TEST_CASE("merge_patches agrees with a clustering oracle") {
  Rng rng(2024);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t side = rng.bernoulli(0.5) ? 128 : 96;
    const auto layout = data::PatchLayout::for_frame(side, side + 32);
    const double band = rng.uniform(0.0, 6.0), radius = rng.uniform(0.5, 6.0);
    const PerPatch per = random_border_scene(rng, layout);
    const auto merged = merge_patches(per, layout, {band, radius});
    const auto expected = clustering_oracle(per, layout, band, radius);
    REQUIRE(merged.size() == expected.size());
    for (const Detection& e : expected) {
      CHECK(std::find(merged.begin(), merged.end(), e) != merged.end());
    }
    for (std::size_t i = 0; i < merged.size(); ++i) {
      for (std::size_t j = i + 1; j < merged.size(); ++j) {
        CHECK_FALSE(conflicts(layout, merged[i], merged[j], band, radius));
      }
      if (i > 0) CHECK(merged[i - 1].score >= merged[i].score);
    }
    // Anything farther than band from every internal boundary survives.
    const double mx = static_cast<double>(layout.patch_width), my = static_cast<double>(layout.patch_height);
    for (std::size_t p = 0; p < data::kPatchCount; ++p) {
      for (const Detection& d : per[p]) {
        const Point f = layout.to_frame(p, d.centroid);
        if (std::abs(f.x - mx) > band && std::abs(f.y - my) > band) {
          const bool found = std::any_of(merged.begin(), merged.end(), [&](const Detection& m) {
            return m.patch == p && m.centroid == f && m.score == d.score;
          });
          CHECK(found);
        }
      }
    }
  }
}

TEST_CASE("patch to frame mapping inverts split_patches") {
  Rng rng(5);
  const auto layout = data::PatchLayout::for_frame(128, 128);
  for (int trial = 0; trial < 200; ++trial) {
    sim::Frame frame{NumArray({128, 128}), {}, trial};
    const Point c{rng.uniform(2.0, 126.0), rng.uniform(2.0, 126.0)};
    frame.annotations.push_back({c, Box{c.x - 1.5, c.y - 1.5, 3.0, 3.0}, 1});
    const auto patches = data::split_patches(frame, layout);
    for (std::size_t p = 0; p < data::kPatchCount; ++p) {
      for (const auto& a : patches[p].annotations) {
        const Point back = layout.to_frame(p, a.centroid);
        const bool inside_patch = a.centroid.x < static_cast<double>(layout.patch_width) &&
                                  a.centroid.y < static_cast<double>(layout.patch_height) && a.centroid.x >= 0 &&
                                  a.centroid.y >= 0;
        CHECK(inside_patch);
        const Box bb = layout.to_frame(p, a.box);
        CHECK(bb.x >= c.x - 1.5 - 1e-9);
        CHECK(bb.x + bb.w <= c.x + 1.5 + 1e-9);
        if (std::abs(back.x - c.x) < 1e-6 && std::abs(back.y - c.y) < 1e-6) {
          CHECK(std::abs(back.x - c.x) < 1e-9);
          CHECK(std::abs(back.y - c.y) < 1e-9);
        }
      }
    }
    // Owner patch holds the exact centroid.
    const std::size_t owner = (c.y >= 64.0 ? 2 : 0) + (c.x >= 64.0 ? 1 : 0);
    bool exact = false;
    for (const auto& a : patches[owner].annotations) {
      const Point back = layout.to_frame(owner, a.centroid);
      exact = exact || (std::abs(back.x - c.x) < 1e-9 && std::abs(back.y - c.y) < 1e-9);
    }
    CHECK(exact);
  }
}

TEST_CASE("detections round trip through JSON lines") {
  const auto dir = std::filesystem::temp_directory_path() / "ulm_post_test";
  std::filesystem::create_directories(dir);
  std::vector<Detection> dets;
  Rng rng(3);
  for (int i = 0; i < 40; ++i) {
    Detection d = at(rng.uniform(0, 128), rng.uniform(0, 128), rng.uniform(0.5, 1.0));
    d.frame = i / 4;
    dets.push_back(d);
  }
  write_detections(dir / "dets.jsonl", dets);
  const auto back = read_detections(dir / "dets.jsonl");
  REQUIRE(back.size() == dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    CHECK(back[i].frame == dets[i].frame);
    CHECK(back[i].centroid == dets[i].centroid);
    CHECK(back[i].box == dets[i].box);
    CHECK(back[i].score == dets[i].score);
  }
  CHECK(detection_line(dets[0]).find("\"cx\"") != std::string::npos);
  write_detections(dir / "empty.jsonl", {});
  CHECK(read_detections(dir / "empty.jsonl").empty());
  io::write_atomic(dir / "bad.jsonl", "{\"frame\": 1}\n");
  CHECK_THROWS_AS(read_detections(dir / "bad.jsonl"), IoError);
  std::filesystem::remove_all(dir);
}
