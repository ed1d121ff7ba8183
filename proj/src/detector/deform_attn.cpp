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

#include "ulm/detector/deform_attn.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

#include "ulm/errors.hpp"

namespace ulm::det {

using num::Graph;
using num::Var;

namespace {

struct Corners {
  std::ptrdiff_t token[4];  // -1 when outside the level
  double weight[4];
  double lx, ly;
};

Corners corners(double x, double y, const LevelShape& lv, std::size_t start) {
  const double fx = std::floor(x), fy = std::floor(y);
  const auto x0 = static_cast<std::ptrdiff_t>(fx), y0 = static_cast<std::ptrdiff_t>(fy);
  Corners c;
  c.lx = x - fx;
  c.ly = y - fy;
  const std::ptrdiff_t xs[4] = {x0, x0 + 1, x0, x0 + 1}, ys[4] = {y0, y0, y0 + 1, y0 + 1};
  c.weight[0] = (1 - c.ly) * (1 - c.lx);
  c.weight[1] = (1 - c.ly) * c.lx;
  c.weight[2] = c.ly * (1 - c.lx);
  c.weight[3] = c.ly * c.lx;
  const auto w = static_cast<std::ptrdiff_t>(lv.width), h = static_cast<std::ptrdiff_t>(lv.height);
  for (int i = 0; i < 4; ++i) {
    c.token[i] = (xs[i] < 0 || ys[i] < 0 || xs[i] >= w || ys[i] >= h)
                     ? -1
                     : static_cast<std::ptrdiff_t>(start) + ys[i] * w + xs[i];
  }
  return c;
}

std::vector<std::size_t> level_starts(std::span<const LevelShape> levels) {
  std::vector<std::size_t> starts(levels.size());
  std::size_t s = 0;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    starts[l] = s;
    s += levels[l].pixels();
  }
  return starts;
}

void check_shapes(const NumArray& value, std::span<const LevelShape> levels, const NumArray& ref,
                  const NumArray& offsets, const NumArray& weights, std::size_t heads, std::size_t points) {
  if (value.rank() != 2) throw DimensionError("deform_sample: value must be [S, D]");
  std::size_t total = 0;
  for (const LevelShape& l : levels) total += l.pixels();
  const std::size_t d = value.dim(1), nq = ref.rank() == 2 ? ref.dim(0) : 0, keys = heads * levels.size() * points;
  if (value.dim(0) != total) {
    throw DimensionError(fmt::format("deform_sample: value has {} tokens, levels hold {}", value.dim(0), total));
  }
  if (heads == 0 || d % heads != 0) throw DimensionError("deform_sample: channels must split evenly over heads");
  if (ref.rank() != 2 || ref.dim(1) != 2) throw DimensionError("deform_sample: reference points must be [Nq, 2]");
  if (offsets.rank() != 2 || offsets.dim(0) != nq || offsets.dim(1) != 2 * keys) {
    throw DimensionError(fmt::format("deform_sample: offsets {} do not match [{}, {}]", shape_string(offsets.shape()),
                                     nq, 2 * keys));
  }
  if (weights.rank() != 2 || weights.dim(0) != nq || weights.dim(1) != keys) {
    throw DimensionError(fmt::format("deform_sample: weights {} do not match [{}, {}]", shape_string(weights.shape()),
                                     nq, keys));
  }
}

}  // namespace

Var deform_sample(Var value, std::span<const LevelShape> levels, Var ref, Var offsets, Var weights,
                  std::size_t heads, std::size_t points) {
  const NumArray& vv = value.value();
  const NumArray& rv = ref.value();
  const NumArray& ov = offsets.value();
  const NumArray& av = weights.value();
  check_shapes(vv, levels, rv, ov, av, heads, points);
  const std::size_t nq = rv.dim(0), d = vv.dim(1), dh = d / heads, nl = levels.size();
  const std::vector<LevelShape> lv(levels.begin(), levels.end());
  const std::vector<std::size_t> starts = level_starts(levels);

  NumArray out({nq, d}, 0.0);
  for (std::size_t q = 0; q < nq; ++q) {
    const double rx = rv[2 * q], ry = rv[2 * q + 1];
    for (std::size_t m = 0; m < heads; ++m) {
      double* dst = out.ptr() + q * d + m * dh;
      for (std::size_t l = 0; l < nl; ++l) {
        for (std::size_t k = 0; k < points; ++k) {
          const std::size_t idx = (m * nl + l) * points + k;
          const double x = rx * static_cast<double>(lv[l].width) + ov[q * 2 * heads * nl * points + 2 * idx] - 0.5;
          const double y = ry * static_cast<double>(lv[l].height) + ov[q * 2 * heads * nl * points + 2 * idx + 1] - 0.5;
          const double a = av[q * heads * nl * points + idx];
          const Corners c = corners(x, y, lv[l], starts[l]);
          for (int i = 0; i < 4; ++i) {
            if (c.token[i] < 0) continue;
            const double s = a * c.weight[i];
            const double* src = vv.ptr() + static_cast<std::size_t>(c.token[i]) * d + m * dh;
            for (std::size_t ch = 0; ch < dh; ++ch) dst[ch] += s * src[ch];
          }
        }
      }
    }
  }

  return value.graph->record(
      "deform_sample", std::move(out), {value, ref, offsets, weights},
      [value, ref, offsets, weights, lv, starts, heads, points, nq, d, dh, nl](Graph& g, const NumArray& gy) {
        const NumArray& vv = g.value(value);
        const NumArray& rv = g.value(ref);
        const NumArray& ov = g.value(offsets);
        const NumArray& av = g.value(weights);
        const bool want_v = g.requires_grad(value), want_r = g.requires_grad(ref);
        const bool want_o = g.requires_grad(offsets), want_a = g.requires_grad(weights);
        double* gv = want_v ? g.grad_mut(value).ptr() : nullptr;
        double* gr = want_r ? g.grad_mut(ref).ptr() : nullptr;
        double* go = want_o ? g.grad_mut(offsets).ptr() : nullptr;
        double* ga = want_a ? g.grad_mut(weights).ptr() : nullptr;
        const std::size_t keys = heads * nl * points;
        for (std::size_t q = 0; q < nq; ++q) {
          const double rx = rv[2 * q], ry = rv[2 * q + 1];
          for (std::size_t m = 0; m < heads; ++m) {
            const double* gout = gy.ptr() + q * d + m * dh;
            for (std::size_t l = 0; l < nl; ++l) {
              for (std::size_t k = 0; k < points; ++k) {
                const std::size_t idx = (m * nl + l) * points + k;
                const double x = rx * static_cast<double>(lv[l].width) + ov[q * 2 * keys + 2 * idx] - 0.5;
                const double y = ry * static_cast<double>(lv[l].height) + ov[q * 2 * keys + 2 * idx + 1] - 0.5;
                const double a = av[q * keys + idx];
                const Corners c = corners(x, y, lv[l], starts[l]);
                double dots[4] = {0.0, 0.0, 0.0, 0.0};
                for (int i = 0; i < 4; ++i) {
                  if (c.token[i] < 0) continue;
                  const std::size_t row = static_cast<std::size_t>(c.token[i]) * d + m * dh;
                  const double* src = vv.ptr() + row;
                  double acc = 0.0;
                  for (std::size_t ch = 0; ch < dh; ++ch) acc += gout[ch] * src[ch];
                  dots[i] = acc;
                  if (gv) {
                    const double s = a * c.weight[i];
                    for (std::size_t ch = 0; ch < dh; ++ch) gv[row + ch] += s * gout[ch];
                  }
                }
                if (ga) {
                  ga[q * keys + idx] += c.weight[0] * dots[0] + c.weight[1] * dots[1] + c.weight[2] * dots[2] +
                                        c.weight[3] * dots[3];
                }
                if (go || gr) {
                  const double dlx = a * ((1 - c.ly) * (dots[1] - dots[0]) + c.ly * (dots[3] - dots[2]));
                  const double dly = a * ((1 - c.lx) * (dots[2] - dots[0]) + c.lx * (dots[3] - dots[1]));
                  if (go) {
                    go[q * 2 * keys + 2 * idx] += dlx;
                    go[q * 2 * keys + 2 * idx + 1] += dly;
                  }
                  if (gr) {
                    gr[2 * q] += dlx * static_cast<double>(lv[l].width);
                    gr[2 * q + 1] += dly * static_cast<double>(lv[l].height);
                  }
                }
              }
            }
          }
        }
      });
}

std::vector<std::vector<std::size_t>> deform_footprint(const NumArray& ref, const NumArray& offsets,
                                                       std::span<const LevelShape> levels, std::size_t heads,
                                                       std::size_t points) {
  const std::size_t nq = ref.dim(0), nl = levels.size(), keys = heads * nl * points;
  if (offsets.rank() != 2 || offsets.dim(0) != nq || offsets.dim(1) != 2 * keys) {
    throw DimensionError("deform_footprint: offsets do not match the sampling layout");
  }
  const std::vector<std::size_t> starts = level_starts(levels);
  std::vector<std::vector<std::size_t>> out(nq);
  for (std::size_t q = 0; q < nq; ++q) {
    for (std::size_t m = 0; m < heads; ++m) {
      for (std::size_t l = 0; l < nl; ++l) {
        for (std::size_t k = 0; k < points; ++k) {
          const std::size_t idx = (m * nl + l) * points + k;
          const double x = ref[2 * q] * static_cast<double>(levels[l].width) + offsets[q * 2 * keys + 2 * idx] - 0.5;
          const double y =
              ref[2 * q + 1] * static_cast<double>(levels[l].height) + offsets[q * 2 * keys + 2 * idx + 1] - 0.5;
          const Corners c = corners(x, y, levels[l], starts[l]);
          for (std::ptrdiff_t t : c.token) {
            if (t >= 0) out[q].push_back(static_cast<std::size_t>(t));
          }
        }
      }
    }
    std::sort(out[q].begin(), out[q].end());
    out[q].erase(std::unique(out[q].begin(), out[q].end()), out[q].end());
  }
  return out;
}

}  // namespace ulm::det
