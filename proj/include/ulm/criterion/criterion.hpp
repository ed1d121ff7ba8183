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
#include <span>
#include <vector>

#include "ulm/detector/detector.hpp"
#include "ulm/geometry.hpp"
#include "ulm/numerics/array.hpp"
#include "ulm/numerics/graph.hpp"

namespace ulm::crit {

// Generalized IoU of two (cx, cy, w, h) boxes; throws ContractError when a
// width or height is not positive.
double giou(const CenterBox& a, const CenterBox& b);

struct GiouGrad {
  double value = 0.0;
  std::array<double, 4> d_a{};  // d giou / d (cx, cy, w, h) of the first box
};
GiouGrad giou_with_grad(const CenterBox& a, const CenterBox& b);

struct LossWeights {
  double cls = 1.0;
  double l1 = 5.0;
  double giou = 2.0;
  double no_object = 0.1;
};

// cost[q, i] = cls * (-p_q(microbubble)) + l1 * |b_q - g_i|_1 + giou * (1 - giou(b_q, g_i)).
// probabilities [Nq, 2], boxes [Nq, 4]; needs at least one ground-truth box.
NumArray matching_cost(const NumArray& probabilities, const NumArray& boxes, std::span<const CenterBox> gt,
                       const LossWeights& w = {});

struct MatchResult {
  std::vector<std::size_t> assignment;  // ground-truth index -> query index
  double total_cost = 0.0;              // summed in ground-truth order
};

// Minimum-cost assignment of every column (ground truth) of cost[Nq, Ngt] to
// a distinct row (query). O(Ngt^2 * Nq).
MatchResult hungarian(const NumArray& cost);

// One layer of the set loss at a given assignment: weighted cross-entropy over
// all queries (matched -> microbubble with weight 1, others -> no-object with
// weight no_object, normalized by the weight sum) plus the box terms of the
// matched pairs divided by the ground-truth count.
num::Var layer_loss(const det::DetectionSet& pred, std::span<const CenterBox> gt, const MatchResult& match,
                    const LossWeights& w);

struct SetLoss {
  num::Var loss;
  std::vector<MatchResult> matches;  // one per layer
};

// Matches every layer on its own cost matrix unless `fixed` supplies the
// assignments, and averages the layer losses.
SetLoss set_loss(std::span<const det::DetectionSet> layers, std::span<const CenterBox> gt, const LossWeights& w = {},
                 const std::vector<MatchResult>* fixed = nullptr);

}  // namespace ulm::crit
