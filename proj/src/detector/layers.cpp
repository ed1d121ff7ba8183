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

#include "ulm/detector/layers.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace ulm::det {

using num::Graph;
using num::Var;

std::size_t norm_groups(std::size_t channels) {
  for (std::size_t g : {8, 4, 2}) {
    if (channels % g == 0) return g;
  }
  return 1;
}

Linear::Linear(num::ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  NumArray w({in, out});
  const double a = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& v : w.data()) v = rng.uniform(-a, a);
  weight = &ps.add(name + ".weight", std::move(w));
  bias = &ps.add(name + ".bias", NumArray({out}, 0.0));
}

Var Linear::operator()(Graph& g, Var x) const { return num::linear(x, g.parameter(*weight), g.parameter(*bias)); }

LayerNorm::LayerNorm(num::ParameterSet& ps, const std::string& name, std::size_t dim) {
  gamma = &ps.add(name + ".gamma", NumArray({dim}, 1.0));
  beta = &ps.add(name + ".beta", NumArray({dim}, 0.0));
}

Var LayerNorm::operator()(Graph& g, Var x) const {
  return num::layer_norm(x, g.parameter(*gamma), g.parameter(*beta));
}

ConvNorm::ConvNorm(num::ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out,
                   std::size_t kernel, std::size_t stride_, Rng& rng)
    : stride(stride_), pad(kernel / 2), groups(norm_groups(out)) {
  NumArray w({out, in, kernel, kernel});
  const double sd = std::sqrt(2.0 / static_cast<double>(in * kernel * kernel));
  for (double& v : w.data()) v = rng.normal(0.0, sd);
  weight = &ps.add(name + ".weight", std::move(w));
  bias = &ps.add(name + ".bias", NumArray({out}, 0.0));
  gamma = &ps.add(name + ".gn_gamma", NumArray({out}, 1.0));
  beta = &ps.add(name + ".gn_beta", NumArray({out}, 0.0));
}

Var ConvNorm::operator()(Graph& g, Var x) const {
  Var y = num::conv2d(x, g.parameter(*weight), g.parameter(*bias), stride, pad);
  return num::group_norm(y, groups, g.parameter(*gamma), g.parameter(*beta));
}

FeedForward::FeedForward(num::ParameterSet& ps, const std::string& name, std::size_t dim, std::size_t hidden,
                         Rng& rng)
    : up(ps, name + ".up", dim, hidden, rng), down(ps, name + ".down", hidden, dim, rng) {}

Var FeedForward::operator()(Graph& g, Var x) const { return down(g, num::relu(up(g, x))); }

DeformableAttention::DeformableAttention(num::ParameterSet& ps, const std::string& name, std::size_t dim,
                                         std::size_t heads_, std::size_t levels_, std::size_t points_, Rng& rng)
    : value_proj(ps, name + ".value", dim, dim, rng),
      offset_head(ps, name + ".offsets", dim, heads_ * levels_ * points_ * 2, rng),
      weight_head(ps, name + ".weights", dim, heads_ * levels_ * points_, rng),
      output_proj(ps, name + ".output", dim, dim, rng),
      heads(heads_),
      levels(levels_),
      points(points_) {
  // Start from a fixed star of sampling points: head m looks along direction
  // 2*pi*m/M, point k at distance k + 1.
  for (double& v : offset_head.weight->value.data()) v = 0.0;
  for (double& v : weight_head.weight->value.data()) v = 0.0;
  NumArray& b = offset_head.bias->value;
  for (std::size_t m = 0; m < heads; ++m) {
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(heads);
    double dx = std::cos(theta), dy = std::sin(theta);
    const double norm = std::max(std::abs(dx), std::abs(dy));
    dx /= norm;
    dy /= norm;
    for (std::size_t l = 0; l < levels; ++l) {
      for (std::size_t k = 0; k < points; ++k) {
        const std::size_t idx = (m * levels + l) * points + k;
        b[2 * idx] = dx * static_cast<double>(k + 1);
        b[2 * idx + 1] = dy * static_cast<double>(k + 1);
      }
    }
  }
}

Var DeformableAttention::attention_weights(Graph& g, Var query) const {
  const std::size_t nq = query.shape()[0], lk = levels * points;
  Var logits = num::reshape(weight_head(g, query), {nq * heads, lk});
  return num::reshape(num::softmax(logits, 1), {nq, heads * lk});
}

Var DeformableAttention::operator()(Graph& g, Var query, Var ref, Var tokens,
                                    std::span<const LevelShape> shapes) const {
  Var value = value_proj(g, tokens);
  Var offsets = offset_head(g, query);
  Var weights = attention_weights(g, query);
  return output_proj(g, deform_sample(value, shapes, ref, offsets, weights, heads, points));
}

MultiHeadAttention::MultiHeadAttention(num::ParameterSet& ps, const std::string& name, std::size_t dim,
                                       std::size_t heads_, Rng& rng)
    : q_proj(ps, name + ".q", dim, dim, rng),
      k_proj(ps, name + ".k", dim, dim, rng),
      v_proj(ps, name + ".v", dim, dim, rng),
      out_proj(ps, name + ".out", dim, dim, rng),
      heads(heads_) {}

Var MultiHeadAttention::operator()(Graph& g, Var query, Var key, Var value) const {
  Var q = q_proj(g, query), k = k_proj(g, key), v = v_proj(g, value);
  const std::size_t d = q.shape()[1], dh = d / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> outs;
  for (std::size_t h = 0; h < heads; ++h) {
    Var qh = num::slice_cols(q, h * dh, (h + 1) * dh);
    Var kh = num::slice_cols(k, h * dh, (h + 1) * dh);
    Var vh = num::slice_cols(v, h * dh, (h + 1) * dh);
    Var att = num::softmax(num::scale(num::matmul(qh, kh, true), inv), 1);
    outs.push_back(num::matmul(att, vh));
  }
  return out_proj(g, num::concat_cols(outs));
}

}  // namespace ulm::det
