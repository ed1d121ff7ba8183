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

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include <cstdint>

#include "json.hpp"
#include "ulm/geometry.hpp"
#include "ulm/postprocess/postprocess.hpp"

namespace ulm::eval {

inline constexpr std::size_t kIouThresholdCount = 10;
// 0.50, 0.55, ..., 0.95.
std::array<double, kIouThresholdCount> iou_thresholds();

struct GreedyMatch {
  std::vector<bool> true_positive;  // per detection, in input order
  std::vector<bool> gt_matched;
};

// Detections must already be in decreasing score order. Each detection takes
// the unmatched ground truth of highest IoU when that IoU >= threshold.
GreedyMatch match_greedy(const std::vector<Box>& dets, const std::vector<Box>& gts, double iou_threshold);
// Same scheme with centroid distance <= tolerance, nearest first.
GreedyMatch match_by_distance(const std::vector<Point>& dets, const std::vector<Point>& gts, double tolerance);

// 101-point interpolated AP of score-sorted TP flags; NaN (with a warning)
// when n_gt is 0.
double average_precision(const std::vector<bool>& flags, std::size_t n_gt);

struct EvalConfig {
  double distance_tolerance = 1.0;  // pixels
  std::size_t max_detections = 100;
};

struct EvalReport {
  double map = 0.0;
  double mar = 0.0;
  double ap50 = 0.0;
  double ap75 = 0.0;
  double localization_precision = 0.0;
  double localization_recall = 0.0;
  double distance_tolerance = 1.0;
  std::array<double, kIouThresholdCount> ap{};
  std::array<double, kIouThresholdCount> ar{};
  std::size_t frames = 0;
  std::size_t ground_truths = 0;
  std::size_t detections = 0;
};

struct FrameTruth {
  std::int64_t frame = 0;
  std::vector<Box> boxes;
  std::vector<Point> centroids;
};

// Detections are grouped by their frame field; frames without a matching
// FrameTruth entry are a contract error, as is an empty truth list.
EvalReport evaluate(const std::vector<post::Detection>& dets, const std::vector<FrameTruth>& truth,
                    const EvalConfig& config = {});

nlohmann::json report_to_json(const EvalReport& r);
std::string report_table(const EvalReport& r);

}  // namespace ulm::eval
