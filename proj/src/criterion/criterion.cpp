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

#include "ulm/criterion/criterion.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "ulm/errors.hpp"

namespace ulm::crit {

using num::Graph;
using num::Var;

namespace {

void require_positive(const CenterBox& b) {
  if (!(b.w > 0.0 && b.h > 0.0)) throw ContractError(fmt::format("giou: box size {}x{} is not positive", b.w, b.h));
}

CenterBox row_box(const NumArray& boxes, std::size_t q) {
  return {boxes[4 * q], boxes[4 * q + 1], boxes[4 * q + 2], boxes[4 * q + 3]};
}

// Overlap length of [a1, a2] and [b1, b2] and its derivatives in a1, a2.
struct Overlap {
  double len;
  double d1;
  double d2;
};
Overlap overlap(double a1, double a2, double b1, double b2) {
  const double lo = std::max(a1, b1), hi = std::min(a2, b2);
  if (hi <= lo) return {0.0, 0.0, 0.0};
  return {hi - lo, a1 > b1 ? -1.0 : 0.0, a2 < b2 ? 1.0 : 0.0};
}

// Hull length of [a1, a2] and [b1, b2] and its derivatives in a1, a2.
Overlap hull(double a1, double a2, double b1, double b2) {
  return {std::max(a2, b2) - std::min(a1, b1), a1 < b1 ? -1.0 : 0.0, a2 > b2 ? 1.0 : 0.0};
}

}  // namespace

GiouGrad giou_with_grad(const CenterBox& a, const CenterBox& b) {
  require_positive(a);
  require_positive(b);
  const double ax1 = a.cx - 0.5 * a.w, ax2 = a.cx + 0.5 * a.w, ay1 = a.cy - 0.5 * a.h, ay2 = a.cy + 0.5 * a.h;
  const double bx1 = b.cx - 0.5 * b.w, bx2 = b.cx + 0.5 * b.w, by1 = b.cy - 0.5 * b.h, by2 = b.cy + 0.5 * b.h;
  const Overlap ix = overlap(ax1, ax2, bx1, bx2), iy = overlap(ay1, ay2, by1, by2);
  const Overlap hx = hull(ax1, ax2, bx1, bx2), hy = hull(ay1, ay2, by1, by2);
  const double inter = ix.len * iy.len, area_a = a.w * a.h, area_b = b.w * b.h;
  const double uni = area_a + area_b - inter, c = hx.len * hy.len;

  GiouGrad out;
  out.value = inter / uni + uni / c - 1.0;

  const double g_inter = (uni + inter) / (uni * uni) - 1.0 / c;
  const double g_area = -inter / (uni * uni) + 1.0 / c;
  const double g_hull = -uni / (c * c);
  // Derivatives in the corner coordinates of a.
  const double dx1 = g_inter * ix.d1 * iy.len + g_area * (-a.h) + g_hull * hx.d1 * hy.len;
  const double dx2 = g_inter * ix.d2 * iy.len + g_area * a.h + g_hull * hx.d2 * hy.len;
  const double dy1 = g_inter * iy.d1 * ix.len + g_area * (-a.w) + g_hull * hy.d1 * hx.len;
  const double dy2 = g_inter * iy.d2 * ix.len + g_area * a.w + g_hull * hy.d2 * hx.len;
  out.d_a = {dx1 + dx2, dy1 + dy2, 0.5 * (dx2 - dx1), 0.5 * (dy2 - dy1)};
  return out;
}

double giou(const CenterBox& a, const CenterBox& b) { return giou_with_grad(a, b).value; }

NumArray matching_cost(const NumArray& probabilities, const NumArray& boxes, std::span<const CenterBox> gt,
                       const LossWeights& w) {
  if (gt.empty()) throw ContractError("matching_cost: needs at least one ground-truth box");
  if (probabilities.rank() != 2 || probabilities.dim(1) != 2 || boxes.rank() != 2 || boxes.dim(1) != 4 ||
      boxes.dim(0) != probabilities.dim(0)) {
    throw DimensionError("matching_cost: expected probabilities [Nq, 2] and boxes [Nq, 4]");
  }
  const std::size_t nq = boxes.dim(0), ng = gt.size();
  NumArray cost({nq, ng});
  for (std::size_t q = 0; q < nq; ++q) {
    const CenterBox b = row_box(boxes, q);
    for (std::size_t i = 0; i < ng; ++i) {
      const double l1 = std::abs(b.cx - gt[i].cx) + std::abs(b.cy - gt[i].cy) + std::abs(b.w - gt[i].w) +
                        std::abs(b.h - gt[i].h);
      cost[q * ng + i] = w.cls * -probabilities[2 * q] + w.l1 * l1 + w.giou * (1.0 - giou(b, gt[i]));
    }
  }
  return cost;
}

MatchResult hungarian(const NumArray& cost) {
  if (cost.rank() != 2) throw DimensionError("hungarian: cost must be [Nq, Ngt]");
  const std::size_t m = cost.dim(0), n = cost.dim(1);
  if (n > m) throw ContractError(fmt::format("hungarian: {} ground truths exceed {} queries", n, m));
  if (!cost.all_finite()) throw NumericError("hungarian: cost matrix has non-finite entries");
  MatchResult out;
  if (n == 0) return out;
  // Shortest augmenting paths with potentials; rows i = ground truth, columns j = queries, 1-based.
  auto a = [&](std::size_t i, std::size_t j) { return cost[(j - 1) * n + (i - 1)]; };
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0), minv(m + 1);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  std::vector<bool> used(m + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0, j) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  out.assignment.assign(n, 0);
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] != 0) out.assignment[p[j] - 1] = j - 1;
  }
  for (std::size_t i = 0; i < n; ++i) out.total_cost += cost[out.assignment[i] * n + i];
  return out;
}

Var layer_loss(const det::DetectionSet& pred, std::span<const CenterBox> gt, const MatchResult& match,
               const LossWeights& w) {
  Var logits = pred.class_logits, boxes = pred.boxes;
  const NumArray& zv = logits.value();
  const NumArray& bv = boxes.value();
  const std::size_t nq = zv.dim(0), ng = gt.size();
  if (zv.rank() != 2 || zv.dim(1) != 2 || bv.rank() != 2 || bv.dim(0) != nq || bv.dim(1) != 4) {
    throw DimensionError("set_loss: expected class logits [Nq, 2] and boxes [Nq, 4]");
  }
  if (match.assignment.size() != ng) throw ContractError("set_loss: assignment does not cover the ground truth");
  if (ng > nq) throw ContractError("set_loss: more ground-truth boxes than queries");

  std::vector<std::ptrdiff_t> gt_of(nq, -1);
  for (std::size_t i = 0; i < ng; ++i) {
    const std::size_t q = match.assignment[i];
    if (q >= nq || gt_of[q] >= 0) throw ContractError("set_loss: assignment is not injective");
    gt_of[q] = static_cast<std::ptrdiff_t>(i);
  }

  double weight_sum = 0.0;
  for (std::size_t q = 0; q < nq; ++q) weight_sum += gt_of[q] >= 0 ? 1.0 : w.no_object;
  NumArray gz({nq, 2}, 0.0), gb({nq, 4}, 0.0);
  double ce = 0.0;
  for (std::size_t q = 0; q < nq; ++q) {
    const double z0 = zv[2 * q], z1 = zv[2 * q + 1], mx = std::max(z0, z1);
    const double lse = mx + std::log(std::exp(z0 - mx) + std::exp(z1 - mx));
    const std::size_t target = gt_of[q] >= 0 ? 0 : 1;
    const double wq = (gt_of[q] >= 0 ? 1.0 : w.no_object) / weight_sum;
    ce += wq * (lse - zv[2 * q + target]);
    const double p0 = std::exp(z0 - lse), p1 = std::exp(z1 - lse);
    gz[2 * q] = w.cls * wq * (p0 - (target == 0 ? 1.0 : 0.0));
    gz[2 * q + 1] = w.cls * wq * (p1 - (target == 1 ? 1.0 : 0.0));
  }
  double box_terms = 0.0;
  if (ng > 0) {
    const double norm = 1.0 / static_cast<double>(ng);
    for (std::size_t i = 0; i < ng; ++i) {
      const std::size_t q = match.assignment[i];
      const CenterBox b = row_box(bv, q);
      const double diff[4] = {b.cx - gt[i].cx, b.cy - gt[i].cy, b.w - gt[i].w, b.h - gt[i].h};
      const GiouGrad gg = giou_with_grad(b, gt[i]);
      double l1 = 0.0;
      for (int k = 0; k < 4; ++k) {
        l1 += std::abs(diff[k]);
        const double sign = diff[k] > 0.0 ? 1.0 : (diff[k] < 0.0 ? -1.0 : 0.0);
        gb[4 * q + static_cast<std::size_t>(k)] = norm * (w.l1 * sign - w.giou * gg.d_a[static_cast<std::size_t>(k)]);
      }
      box_terms += norm * (w.l1 * l1 + w.giou * (1.0 - gg.value));
    }
  }
  NumArray value({1}, w.cls * ce + box_terms);
  return logits.graph->record("set_loss", std::move(value), {logits, boxes},
                              [logits, boxes, gz = std::move(gz), gb = std::move(gb)](Graph& g, const NumArray& gy) {
                                const double s = gy[0];
                                if (g.requires_grad(logits)) {
                                  NumArray& t = g.grad_mut(logits);
                                  for (std::size_t i = 0; i < gz.size(); ++i) t[i] += s * gz[i];
                                }
                                if (g.requires_grad(boxes)) {
                                  NumArray& t = g.grad_mut(boxes);
                                  for (std::size_t i = 0; i < gb.size(); ++i) t[i] += s * gb[i];
                                }
                              });
}

SetLoss set_loss(std::span<const det::DetectionSet> layers, std::span<const CenterBox> gt, const LossWeights& w,
                 const std::vector<MatchResult>* fixed) {
  if (layers.empty()) throw ContractError("set_loss: no prediction layers");
  if (fixed && fixed->size() != layers.size()) throw ContractError("set_loss: one assignment per layer is required");
  SetLoss out;
  Var total;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    MatchResult match;
    if (fixed) {
      match = (*fixed)[l];
    } else if (!gt.empty()) {
      match = hungarian(matching_cost(layers[l].probabilities.value(), layers[l].boxes.value(), gt, w));
    }
    Var term = layer_loss(layers[l], gt, match, w);
    total = l == 0 ? term : num::add(total, term);
    out.matches.push_back(std::move(match));
  }
  out.loss = layers.size() == 1 ? total : num::scale(total, 1.0 / static_cast<double>(layers.size()));
  return out;
}

}  // namespace ulm::crit
