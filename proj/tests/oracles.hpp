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

// Slow, direct reference implementations shared by the unit tests and the
// acceptance checks.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include "ulm/evaluation/evaluation.hpp"
#include "ulm/geometry.hpp"
#include "ulm/numerics/array.hpp"
#include "ulm/postprocess/postprocess.hpp"

namespace ulm::oracle {

// Exhaustive minimum over injections gt -> query, summed in gt order.
inline double min_assignment_cost(const NumArray& cost) {
  const std::size_t nq = cost.dim(0), ng = cost.dim(1);
  double best = std::numeric_limits<double>::infinity();
  std::vector<bool> used(nq, false);
  std::vector<std::size_t> pick(ng);
  auto rec = [&](auto&& self, std::size_t i) -> void {
    if (i == ng) {
      double s = 0.0;
      for (std::size_t k = 0; k < ng; ++k) s += cost[pick[k] * ng + k];
      best = std::min(best, s);
      return;
    }
    for (std::size_t q = 0; q < nq; ++q) {
      if (used[q]) continue;
      used[q] = true;
      pick[i] = q;
      self(self, i + 1);
      used[q] = false;
    }
  };
  rec(rec, 0);
  return best;
}

inline double corner_iou(const Box& a, const Box& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y));
  const double inter = ix * iy;
  return inter / (a.w * a.h + b.w * b.h - inter);
}

// Greedy matching written out over an IoU table, one detection at a time.
inline std::vector<bool> greedy_flags(const std::vector<Box>& dets, const std::vector<Box>& gts, double thr) {
  std::vector<std::vector<double>> table(dets.size(), std::vector<double>(gts.size()));
  for (std::size_t d = 0; d < dets.size(); ++d) {
    for (std::size_t g = 0; g < gts.size(); ++g) table[d][g] = corner_iou(dets[d], gts[g]);
  }
  std::vector<bool> taken(gts.size(), false), flags(dets.size(), false);
  for (std::size_t d = 0; d < dets.size(); ++d) {
    std::vector<std::size_t> order(gts.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return table[d][a] > table[d][b]; });
    for (std::size_t g : order) {
      if (taken[g] || table[d][g] < thr) continue;
      taken[g] = flags[d] = true;
      break;
    }
  }
  return flags;
}

// Interpolated precision at recall r: best precision over all cut-offs whose
// recall reaches r.
inline double interpolated_ap(const std::vector<bool>& flags, std::size_t n_gt) {
  double total = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    double best = 0.0;
    std::size_t tp = 0;
    for (std::size_t cut = 1; cut <= flags.size(); ++cut) {
      tp += flags[cut - 1] ? 1 : 0;
      const double recall = static_cast<double>(tp) / static_cast<double>(n_gt);
      if (recall >= r) best = std::max(best, static_cast<double>(tp) / static_cast<double>(cut));
    }
    total += best;
  }
  return total / 101.0;
}

// Mean over the IoU grid 0.50:0.05:0.95 of the dataset-wide AP.
inline double coco_map(const std::vector<post::Detection>& dets, const std::vector<eval::FrameTruth>& truth) {
  std::size_t n_gt = 0;
  for (const auto& t : truth) n_gt += t.boxes.size();
  double sum = 0.0;
  for (int ti = 0; ti < 10; ++ti) {
    const double thr = (50.0 + 5.0 * ti) / 100.0;
    std::vector<std::pair<double, bool>> all;
    for (const auto& t : truth) {
      std::vector<post::Detection> mine;
      for (const auto& d : dets) {
        if (d.frame == t.frame) mine.push_back(d);
      }
      std::sort(mine.begin(), mine.end(), [](const post::Detection& a, const post::Detection& b) { return a.score > b.score; });
      std::vector<Box> boxes;
      for (const auto& d : mine) boxes.push_back(d.box);
      const auto flags = greedy_flags(boxes, t.boxes, thr);
      for (std::size_t i = 0; i < mine.size(); ++i) all.emplace_back(mine[i].score, flags[i]);
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<bool> flags;
    for (const auto& a : all) flags.push_back(a.second);
    sum += interpolated_ap(flags, n_gt);
  }
  return sum / 10.0;
}

}  // namespace ulm::oracle
