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

#include "ulm/evaluation/evaluation.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "ulm/errors.hpp"
#include "ulm/log.hpp"

namespace ulm::eval {

std::array<double, kIouThresholdCount> iou_thresholds() {
  std::array<double, kIouThresholdCount> t{};
  for (std::size_t i = 0; i < kIouThresholdCount; ++i) t[i] = 0.5 + 0.05 * static_cast<double>(i);
  return t;
}

GreedyMatch match_greedy(const std::vector<Box>& dets, const std::vector<Box>& gts, double iou_threshold) {
  GreedyMatch m{std::vector<bool>(dets.size(), false), std::vector<bool>(gts.size(), false)};
  for (std::size_t d = 0; d < dets.size(); ++d) {
    double best = iou_threshold;
    std::ptrdiff_t pick = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (m.gt_matched[g]) continue;
      const double v = iou(dets[d], gts[g]);
      if (v >= best && (pick < 0 || v > best)) {
        best = v;
        pick = static_cast<std::ptrdiff_t>(g);
      }
    }
    if (pick >= 0) {
      m.true_positive[d] = true;
      m.gt_matched[static_cast<std::size_t>(pick)] = true;
    }
  }
  return m;
}

GreedyMatch match_by_distance(const std::vector<Point>& dets, const std::vector<Point>& gts, double tolerance) {
  GreedyMatch m{std::vector<bool>(dets.size(), false), std::vector<bool>(gts.size(), false)};
  for (std::size_t d = 0; d < dets.size(); ++d) {
    double best = std::numeric_limits<double>::infinity();
    std::ptrdiff_t pick = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (m.gt_matched[g]) continue;
      const double dist = std::hypot(dets[d].x - gts[g].x, dets[d].y - gts[g].y);
      if (dist <= tolerance && dist < best) {
        best = dist;
        pick = static_cast<std::ptrdiff_t>(g);
      }
    }
    if (pick >= 0) {
      m.true_positive[d] = true;
      m.gt_matched[static_cast<std::size_t>(pick)] = true;
    }
  }
  return m;
}

double average_precision(const std::vector<bool>& flags, std::size_t n_gt) {
  if (n_gt == 0) {
    log::warn("average precision is undefined without ground truth");
    return std::numeric_limits<double>::quiet_NaN();
  }
  const std::size_t n = flags.size();
  std::vector<double> recall(n), precision(n);
  double tp = 0.0, fp = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    (flags[i] ? tp : fp) += 1.0;
    recall[i] = tp / static_cast<double>(n_gt);
    precision[i] = tp / (tp + fp);
  }
  for (std::size_t i = n; i-- > 1;) precision[i - 1] = std::max(precision[i - 1], precision[i]);
  double sum = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double r = static_cast<double>(k) / 100.0;
    const auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) sum += precision[static_cast<std::size_t>(it - recall.begin())];
  }
  return sum / 101.0;
}

EvalReport evaluate(const std::vector<post::Detection>& dets, const std::vector<FrameTruth>& truth,
                    const EvalConfig& config) {
  if (truth.empty()) throw ContractError("evaluate: empty dataset");
  if (!(config.distance_tolerance > 0.0)) throw ContractError("evaluate: distance tolerance must be positive");
  std::map<std::int64_t, std::size_t> slot;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!slot.emplace(truth[i].frame, i).second) {
      throw ContractError(fmt::format("evaluate: frame {} listed twice", truth[i].frame));
    }
    if (truth[i].boxes.size() != truth[i].centroids.size()) {
      throw ContractError(fmt::format("evaluate: frame {} has mismatched boxes and centroids", truth[i].frame));
    }
  }
  std::vector<std::vector<post::Detection>> per_frame(truth.size());
  for (const post::Detection& d : dets) {
    auto it = slot.find(d.frame);
    if (it == slot.end()) throw ContractError(fmt::format("evaluate: detection for unknown frame {}", d.frame));
    per_frame[it->second].push_back(d);
  }
  auto by_score = [](const post::Detection& a, const post::Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.centroid.x != b.centroid.x) return a.centroid.x < b.centroid.x;
    return a.centroid.y < b.centroid.y;
  };
  for (auto& f : per_frame) {
    std::sort(f.begin(), f.end(), by_score);
    if (f.size() > config.max_detections) f.resize(config.max_detections);
  }

  EvalReport r;
  r.distance_tolerance = config.distance_tolerance;
  r.frames = truth.size();
  for (const FrameTruth& t : truth) r.ground_truths += t.boxes.size();
  for (const auto& f : per_frame) r.detections += f.size();

  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (r.ground_truths == 0) {
    log::warn("evaluate: no ground truth in {} frames, precision metrics are undefined", r.frames);
    r.ap.fill(nan);
    r.ar.fill(nan);
    r.map = r.mar = r.ap50 = r.ap75 = nan;
  }
  const auto thresholds = iou_thresholds();
  for (std::size_t ti = 0; ti < kIouThresholdCount && r.ground_truths > 0; ++ti) {
    std::vector<std::pair<double, bool>> scored;
    std::size_t matched = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      std::vector<Box> boxes;
      for (const post::Detection& d : per_frame[i]) boxes.push_back(d.box);
      const GreedyMatch m = match_greedy(boxes, truth[i].boxes, thresholds[ti]);
      for (std::size_t k = 0; k < boxes.size(); ++k) scored.emplace_back(per_frame[i][k].score, m.true_positive[k]);
      matched += static_cast<std::size_t>(std::count(m.gt_matched.begin(), m.gt_matched.end(), true));
    }
    std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<bool> flags;
    for (const auto& s : scored) flags.push_back(s.second);
    r.ap[ti] = average_precision(flags, r.ground_truths);
    r.ar[ti] = static_cast<double>(matched) / static_cast<double>(r.ground_truths);
  }
  if (r.ground_truths > 0) {
    r.map = std::accumulate(r.ap.begin(), r.ap.end(), 0.0) / static_cast<double>(kIouThresholdCount);
    r.mar = std::accumulate(r.ar.begin(), r.ar.end(), 0.0) / static_cast<double>(kIouThresholdCount);
    r.ap50 = r.ap[0];
    r.ap75 = r.ap[5];
  }

  std::size_t loc_tp = 0, loc_dets = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    std::vector<Point> pts;
    for (const post::Detection& d : per_frame[i]) pts.push_back(d.centroid);
    const GreedyMatch m = match_by_distance(pts, truth[i].centroids, config.distance_tolerance);
    loc_tp += static_cast<std::size_t>(std::count(m.true_positive.begin(), m.true_positive.end(), true));
    loc_dets += pts.size();
  }
  r.localization_precision = loc_dets == 0 ? 0.0 : static_cast<double>(loc_tp) / static_cast<double>(loc_dets);
  r.localization_recall = r.ground_truths == 0 ? 0.0
                                               : static_cast<double>(loc_tp) / static_cast<double>(r.ground_truths);
  return r;
}

nlohmann::json report_to_json(const EvalReport& r) {
  return {{"mAP", r.map},
          {"mAR", r.mar},
          {"ap50", r.ap50},
          {"ap75", r.ap75},
          {"ap_per_iou", r.ap},
          {"ar_per_iou", r.ar},
          {"iou_thresholds", iou_thresholds()},
          {"localization_precision", r.localization_precision},
          {"localization_recall", r.localization_recall},
          {"distance_tolerance_px", r.distance_tolerance},
          {"frames", r.frames},
          {"ground_truths", r.ground_truths},
          {"detections", r.detections}};
}

std::string report_table(const EvalReport& r) {
  std::string s;
  s += fmt::format("{:<34}{:>10}\n", "metric", "value");
  s += fmt::format("{:<34}{:>10.4f}\n", "mAP (IoU 0.50:0.95)", r.map);
  s += fmt::format("{:<34}{:>10.4f}\n", "mAR (IoU 0.50:0.95, 100 dets)", r.mar);
  s += fmt::format("{:<34}{:>10.4f}\n", "AP50", r.ap50);
  s += fmt::format("{:<34}{:>10.4f}\n", "AP75", r.ap75);
  s += fmt::format("{:<34}{:>10.4f}\n", fmt::format("localization precision ({} px)", r.distance_tolerance),
                   r.localization_precision);
  s += fmt::format("{:<34}{:>10.4f}\n", fmt::format("localization recall ({} px)", r.distance_tolerance),
                   r.localization_recall);
  s += fmt::format("{:<34}{:>10}\n", "frames", r.frames);
  s += fmt::format("{:<34}{:>10}\n", "ground truths", r.ground_truths);
  s += fmt::format("{:<34}{:>10}\n", "detections", r.detections);
  return s;
}

}  // namespace ulm::eval
