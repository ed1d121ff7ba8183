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
#include <fstream>
#include <map>
#include <set>

#include "test_support.hpp"
#include "ulm/dataset/augment.hpp"
#include "ulm/dataset/coco.hpp"
#include "ulm/dataset/patches.hpp"
#include "ulm/dataset/split.hpp"
#include "ulm/errors.hpp"
#include "ulm/simulator/simulator.hpp"

using namespace ulm;
using namespace ulm::data;
namespace fs = std::filesystem;

namespace {

sim::Frame noise_frame(std::size_t h, std::size_t w, Rng& rng, std::int64_t index) {
  return sim::Frame{testing::random_array({h, w}, rng, 0.0, 1.0), {}, index};
}

std::vector<sim::Frame> small_sequence(std::uint64_t seed, std::size_t n, std::size_t bubbles = 5) {
  sim::SceneSpec spec;
  spec.width = 64;
  spec.height = 64;
  spec.vessel_count = 4;
  spec.bubbles_per_frame = bubbles;
  Rng rng(seed);
  return sim::simulate_sequence(spec, n, rng);
}

// Direct covariance over the product of standard deviations, in long double.
double pearson_oracle(const NumArray& a, const NumArray& b) {
  const std::size_t n = a.size();
  long double ma = 0, mb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  long double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  return static_cast<double>(cov / std::sqrt(va * vb));
}

// Independent check of the split manifest against raw frames.
void verify_manifest(const std::vector<sim::Frame>& frames, const SplitManifest& m) {
  std::set<std::int64_t> train(m.train_ids.begin(), m.train_ids.end()), test(m.test_ids.begin(), m.test_ids.end());
  CHECK(train.size() == m.train_ids.size());
  CHECK(test.size() == m.test_ids.size());
  std::set<std::int64_t> all;
  for (const auto& f : frames) all.insert(f.index);
  std::set<std::int64_t> both = train;
  both.insert(test.begin(), test.end());
  CHECK(both == all);
  CHECK(both.size() == train.size() + test.size());
  std::map<std::int64_t, const sim::Frame*> by_id;
  for (const auto& f : frames) by_id[f.index] = &f;
  for (std::int64_t t : test) {
    for (std::int64_t r : train) CHECK(pearson_oracle(by_id[t]->image, by_id[r]->image) < m.threshold);
  }
  CHECK(m.shortfall == m.requested_test_size - test.size());
}

// Box invariants checked without the library validator.
void check_coco_invariants(const CocoDataset& ds) {
  std::map<std::int64_t, CocoImage> images;
  for (const auto& im : ds.images) CHECK(images.emplace(im.id, im).second);
  std::set<std::int64_t> ann_ids;
  for (const auto& a : ds.annotations) {
    CHECK(ann_ids.insert(a.id).second);
    REQUIRE(images.contains(a.image_id));
    const auto& im = images[a.image_id];
    CHECK(a.bbox.x >= 0.0);
    CHECK(a.bbox.y >= 0.0);
    CHECK(a.bbox.x + a.bbox.w <= static_cast<double>(im.width));
    CHECK(a.bbox.y + a.bbox.h <= static_cast<double>(im.height));
    CHECK(a.area == a.bbox.w * a.bbox.h);
    CHECK(a.category_id == 1);
  }
  REQUIRE(ds.categories.size() == 1);
  CHECK(ds.categories[0].name == "microbubble");
}

}  // namespace

TEST_CASE("export_coco") {
  const fs::path dir = fs::temp_directory_path() / "ulm_coco_test";
  fs::remove_all(dir);
  SUBCASE("empty frame list") {
    CocoDataset ds = export_coco({}, dir / "empty.json");
    CHECK(ds.images.empty());
    CHECK(ds.annotations.empty());
    CocoDataset back = import_coco(dir / "empty.json");
    CHECK(back.images.empty());
    CHECK(back.annotations.empty());
    CHECK(back.categories.size() == 1);
  }
  SUBCASE("one frame with three bubbles") {
    auto frames = small_sequence(3, 1, 3);
    REQUIRE(frames[0].annotations.size() == 3);
    CocoDataset ds = export_coco(frames, dir / "one.json");
    REQUIRE(ds.annotations.size() == 3);
    for (const auto& a : ds.annotations) CHECK(a.image_id == 1);
    check_coco_invariants(ds);
  }
  SUBCASE("fifty-frame round trip") {
    auto frames = small_sequence(11, 50, 8);
    CocoDataset ds = export_coco(frames, dir / "fifty.json");
    check_coco_invariants(ds);
    CocoDataset back = import_coco(dir / "fifty.json");
    CHECK(back.images == ds.images);
    CHECK(back.annotations == ds.annotations);
    auto rebuilt = frames_from_coco(back);
    REQUIRE(rebuilt.size() == frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
      REQUIRE(rebuilt[i].annotations.size() == frames[i].annotations.size());
      for (std::size_t k = 0; k < frames[i].annotations.size(); ++k) {
        CHECK(rebuilt[i].annotations[k].box == frames[i].annotations[k].box);
        CHECK(rebuilt[i].annotations[k].centroid == frames[i].annotations[k].centroid);
      }
    }
  }
  SUBCASE("unwritable path") {
    fs::create_directories(dir);
    std::ofstream(dir / "blocker") << "x";
    CHECK_THROWS_AS(export_coco(small_sequence(1, 1), dir / "blocker" / "out.json"), IoError);
  }
  SUBCASE("validator rejects dangling references") {
    CocoDataset ds = to_coco(small_sequence(2, 2));
    REQUIRE(!ds.annotations.empty());
    ds.annotations[0].image_id = 999;
    CHECK_THROWS_AS(validate_coco(ds), ContractError);
  }
  fs::remove_all(dir);
}

TEST_CASE("frame_correlation") {
  Rng rng(5);
  sim::Frame a = noise_frame(16, 20, rng, 0);
  SUBCASE("self correlation") { CHECK(frame_correlation(a, a).value == doctest::Approx(1.0).epsilon(1e-14)); }
  SUBCASE("anti-correlated") {
    sim::Frame b = a;
    for (double& v : b.image.data()) v = -v + 3.0;
    CHECK(frame_correlation(a, b).value == doctest::Approx(-1.0).epsilon(1e-14));
  }
  SUBCASE("random pairs match the covariance oracle") {
    for (int trial = 0; trial < 20; ++trial) {
      sim::Frame x = noise_frame(16, 20, rng, 1), y = noise_frame(16, 20, rng, 2);
      for (std::size_t i = 0; i < y.image.size(); ++i) y.image[i] += 0.3 * x.image[i];
      const double c = frame_correlation(x, y).value;
      CHECK(std::abs(c - pearson_oracle(x.image, y.image)) < 1e-12);
      CHECK(c == frame_correlation(y, x).value);
    }
  }
  SUBCASE("constant frame is flagged and defined as zero") {
    sim::Frame flat{NumArray({16, 20}, 0.25), {}, 9};
    const Correlation c = frame_correlation(a, flat);
    CHECK(c.degenerate);
    CHECK(c.value == 0.0);
  }
  SUBCASE("shape mismatch") { CHECK_THROWS_AS(frame_correlation(a, noise_frame(8, 8, rng, 1)), DimensionError); }
  SUBCASE("matrix agrees with pairwise calls for any thread count") {
    std::vector<sim::Frame> frames;
    for (int i = 0; i < 9; ++i) frames.push_back(noise_frame(10, 10, rng, i));
    const auto one = correlation_matrix(frames, 1), four = correlation_matrix(frames, 4);
    CHECK(one.values == four.values);
    for (std::size_t i = 0; i < 9; ++i) {
      for (std::size_t j = 0; j < 9; ++j) {
        CHECK(std::abs(one.values.at(i, j) - pearson_oracle(frames[i].image, frames[j].image)) < 1e-12);
      }
    }
  }
}

TEST_CASE("split_by_correlation") {
  Rng rng(13);
  SUBCASE("identical frames leave nothing for testing") {
    sim::Frame base = noise_frame(12, 12, rng, 0);
    std::vector<sim::Frame> frames;
    for (int i = 0; i < 10; ++i) frames.push_back(sim::Frame{base.image, {}, i});
    Rng r(1);
    SplitManifest m = split_by_correlation(frames, 4, 0.18, r);
    CHECK(m.test_ids.empty());
    CHECK(m.shortfall == 4);
    CHECK(m.train_ids.size() == 10);
  }
  SUBCASE("independent noise frames fill the test set") {
    for (std::uint64_t trial = 0; trial < 5; ++trial) {
      Rng frames_rng(100 + trial);
      std::vector<sim::Frame> frames;
      for (int i = 0; i < 60; ++i) frames.push_back(noise_frame(24, 24, frames_rng, i));
      Rng r(trial);
      SplitManifest m = split_by_correlation(frames, 20, 0.18, r);
      CHECK(m.test_ids.size() == 20);
      CHECK(m.shortfall == 0);
      verify_manifest(frames, m);
    }
  }
  SUBCASE("simulated clips are re-verifiable post hoc") {
    sim::DatasetSpec spec;
    spec.scene.width = spec.scene.height = 48;
    spec.scene.vessel_count = 3;
    spec.frames = 120;
    spec.frames_per_clip = 10;
    Rng r(21);
    auto frames = sim::simulate_dataset(spec, r);
    Rng split_rng(4);
    SplitManifest m = split_by_correlation(frames, 30, 0.18, split_rng);
    verify_manifest(frames, m);
    const auto cm = correlation_matrix(frames);
    CHECK(max_cross_correlation(cm.values, frames, m) < 0.18);
    CHECK(m.correlation_digest == matrix_digest(cm.values));
  }
  SUBCASE("deterministic and serializable") {
    std::vector<sim::Frame> frames;
    for (int i = 0; i < 20; ++i) frames.push_back(noise_frame(8, 8, rng, i));
    Rng a(3), b(3);
    SplitManifest ma = split_by_correlation(frames, 5, 0.3, a), mb = split_by_correlation(frames, 5, 0.3, b);
    CHECK(ma.test_ids == mb.test_ids);
    SplitManifest back = manifest_from_json(manifest_to_json(ma));
    CHECK(back.test_ids == ma.test_ids);
    CHECK(back.train_ids == ma.train_ids);
    CHECK(back.correlation_digest == ma.correlation_digest);
  }
  SUBCASE("test size must leave training frames") {
    std::vector<sim::Frame> frames;
    for (int i = 0; i < 4; ++i) frames.push_back(noise_frame(8, 8, rng, i));
    Rng r(1);
    CHECK_THROWS_AS(split_by_correlation(frames, 4, 0.18, r), ContractError);
    CHECK_THROWS_AS(split_by_correlation(frames, 2, 0.0, r), ContractError);
    CHECK_THROWS_AS(split_by_correlation(frames, 2, 1.5, r), ContractError);
  }
  SUBCASE("threshold 1 admits any split of distinct frames") {
    std::vector<sim::Frame> frames;
    for (int i = 0; i < 12; ++i) frames.push_back(noise_frame(8, 8, rng, i));
    Rng r(2);
    const SplitManifest m = split_by_correlation(frames, 6, 1.0, r);
    CHECK(m.test_ids.size() == 6);
    CHECK(m.shortfall == 0);
  }
}

TEST_CASE("split_patches") {
  const PatchLayout layout = PatchLayout::for_frame(64, 64);
  sim::Frame frame{NumArray({64, 64}, 0.0), {}, 7};
  for (std::size_t i = 0; i < frame.image.size(); ++i) frame.image[i] = static_cast<double>(i);

  SUBCASE("patches tile the frame") {
    auto patches = split_patches(frame, layout);
    for (std::size_t p = 0; p < kPatchCount; ++p) {
      CHECK(patches[p].index == 7);
      for (std::size_t i = 0; i < 32; ++i) {
        for (std::size_t j = 0; j < 32; ++j) {
          CHECK(patches[p].image.at(i, j) == frame.image.at(i + static_cast<std::size_t>(layout.offsets[p].y),
                                                            j + static_cast<std::size_t>(layout.offsets[p].x)));
        }
      }
    }
  }
  SUBCASE("bubble wholly inside patch 0") {
    frame.annotations.push_back({{10.0, 12.0}, {8.0, 10.0, 4.0, 4.0}, 1});
    auto patches = split_patches(frame, layout);
    REQUIRE(patches[0].annotations.size() == 1);
    CHECK(patches[0].annotations[0].box == Box{8.0, 10.0, 4.0, 4.0});
    for (std::size_t p = 1; p < kPatchCount; ++p) CHECK(patches[p].annotations.empty());
  }
  SUBCASE("bubble inside patch 3 is shifted by the patch offset") {
    frame.annotations.push_back({{50.0, 40.0}, {48.0, 38.0, 4.0, 4.0}, 1});
    auto patches = split_patches(frame, layout);
    REQUIRE(patches[3].annotations.size() == 1);
    CHECK(patches[3].annotations[0].centroid == Point{18.0, 8.0});
    CHECK(patches[3].annotations[0].box == Box{16.0, 6.0, 4.0, 4.0});
  }
  SUBCASE("bubble centred on the vertical border") {
    frame.annotations.push_back({{32.0, 10.0}, {29.0, 7.0, 6.0, 6.0}, 1});
    auto patches = split_patches(frame, layout);
    REQUIRE(patches[0].annotations.size() == 1);
    REQUIRE(patches[1].annotations.size() == 1);
    CHECK(patches[0].annotations[0].box == Box{29.0, 7.0, 3.0, 6.0});
    CHECK(patches[1].annotations[0].box == Box{0.0, 7.0, 3.0, 6.0});
    CHECK(patches[0].annotations[0].centroid == Point{30.5, 10.0});
    CHECK(patches[1].annotations[0].centroid == Point{0.0, 10.0});
    for (const auto& p : patches) CHECK_NOTHROW(sim::validate_frame(p));
  }
  SUBCASE("odd dimensions") {
    CHECK_THROWS_AS(PatchLayout::for_frame(63, 64), ContractError);
    CHECK_THROWS_AS(PatchLayout::for_frame(64, 65), ContractError);
  }
  SUBCASE("random frames reconstruct from their patches") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto f = small_sequence(seed, 1, 15)[0];
      auto patches = split_patches(f, layout);
      std::map<std::int64_t, std::vector<Box>> pieces;
      for (std::size_t p = 0; p < kPatchCount; ++p) {
        CHECK_NOTHROW(sim::validate_frame(patches[p]));
        for (const auto& a : patches[p].annotations) pieces[a.id].push_back(layout.to_frame(p, a.box));
      }
      REQUIRE(pieces.size() == f.annotations.size());
      for (const auto& a : f.annotations) {
        const auto& parts = pieces.at(a.id);
        double x0 = 1e9, y0 = 1e9, x1 = -1e9, y1 = -1e9, area = 0.0;
        for (const Box& b : parts) {
          x0 = std::min(x0, b.x);
          y0 = std::min(y0, b.y);
          x1 = std::max(x1, b.right());
          y1 = std::max(y1, b.bottom());
          area += b.area();
        }
        CHECK(iou(Box{x0, y0, x1 - x0, y1 - y0}, a.box) >= 0.99);
        CHECK(std::abs(area - a.box.area()) < 1e-9);
      }
    }
  }
}

TEST_CASE("augment") {
  auto frames = small_sequence(8, 3, 12);
  const sim::Frame& f = frames[2];
  SUBCASE("identity draw") {
    sim::Frame out = apply_augmentation(f, AugmentDraw{});
    CHECK(out.image == f.image);
    CHECK(out.annotations == f.annotations);
  }
  SUBCASE("horizontal flip is an involution") {
    AugmentDraw d{true, false, 1.0};
    sim::Frame twice = apply_augmentation(apply_augmentation(f, d), d);
    CHECK(max_abs_diff(twice.image, f.image) <= 1e-12);
    REQUIRE(twice.annotations.size() == f.annotations.size());
    for (std::size_t i = 0; i < f.annotations.size(); ++i) {
      CHECK(std::abs(twice.annotations[i].centroid.x - f.annotations[i].centroid.x) < 1e-12);
      CHECK(std::abs(twice.annotations[i].box.x - f.annotations[i].box.x) < 1e-12);
    }
  }
  SUBCASE("flips move pixels and labels together") {
    sim::Frame out = apply_augmentation(f, AugmentDraw{true, true, 1.0});
    const std::size_t h = f.height(), w = f.width();
    CHECK(out.image.at(0, 0) == f.image.at(h - 1, w - 1));
    CHECK(out.annotations[0].centroid.x == doctest::Approx(static_cast<double>(w) - f.annotations[0].centroid.x));
    CHECK(out.annotations[0].centroid.y == doctest::Approx(static_cast<double>(h) - f.annotations[0].centroid.y));
  }
  SUBCASE("scaling keeps a lone bubble's peak under its label") {
    sim::SceneSpec spec;
    spec.width = spec.height = 64;
    spec.vessel_count = 1;
    spec.bubbles_per_frame = 1;
    spec.noise.sigma = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng r(seed);
      auto one = sim::simulate_sequence(spec, 1, r)[0];
      if (one.annotations.empty()) continue;
      for (double s : {0.8, 1.13}) {
        sim::Frame out = apply_augmentation(one, AugmentDraw{false, false, s});
        if (out.annotations.empty()) continue;
        std::size_t best = 0;
        for (std::size_t i = 1; i < out.image.size(); ++i) {
          if (out.image[i] > out.image[best]) best = i;
        }
        CHECK(std::abs(static_cast<double>(best % 64) + 0.5 - out.annotations[0].centroid.x) <= 1.0);
        CHECK(std::abs(static_cast<double>(best / 64) + 0.5 - out.annotations[0].centroid.y) <= 1.0);
      }
    }
  }
  SUBCASE("random draws preserve frame invariants") {
    Rng rng(99);
    int flips = 0;
    for (int i = 0; i < 1000; ++i) {
      AugmentDraw d = draw_augmentation(AugmentSpec{}, rng);
      CHECK(d.scale >= 0.8);
      CHECK(d.scale <= 1.2);
      flips += d.hflip;
      sim::Frame out = apply_augmentation(f, d);
      CHECK_NOTHROW(sim::validate_frame(out));
      for (const auto& a : out.annotations) CHECK(a.box.contains(a.centroid));
    }
    CHECK(flips > 400);
    CHECK(flips < 600);
  }
}
