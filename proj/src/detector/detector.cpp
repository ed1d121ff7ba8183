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

#include "ulm/detector/detector.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numbers>

#include "ulm/errors.hpp"

namespace ulm::det {

using num::Graph;
using num::Var;

Detector::Detector(const DetectorConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const std::size_t d = config_.d_model, nl = config_.levels;

  stages_.emplace_back(params_, "backbone.stage1", 1, config_.stem_channels, 3, config_.stride_exponent == 2 ? 2 : 1,
                       rng);
  stages_.emplace_back(params_, "backbone.stage2", config_.stem_channels, config_.mid_channels, 3, 2, rng);
  stages_.emplace_back(params_, "backbone.stage3", config_.mid_channels, d, 3, 2, rng);
  for (std::size_t l = 2; l < nl; ++l) {
    stages_.emplace_back(params_, fmt::format("backbone.stage{}", l + 2), d, d, 3, 2, rng);
  }
  for (std::size_t l = 0; l < nl; ++l) {
    const std::size_t in = l == 0 ? config_.mid_channels : d;
    input_proj_.emplace_back(params_, fmt::format("input_proj{}", l), in, d, 1, 1, rng);
  }
  NumArray lvl({nl, d});
  for (double& v : lvl.data()) v = rng.normal();
  level_embed_ = &params_.add("level_embed", std::move(lvl));

  for (std::size_t i = 0; i < config_.encoder_layers; ++i) {
    const std::string p = fmt::format("encoder{}", i);
    enc_.push_back(EncoderLayer{DeformableAttention(params_, p + ".attn", d, config_.heads, nl, config_.points, rng),
                                LayerNorm(params_, p + ".norm1", d),
                                FeedForward(params_, p + ".ffn", d, config_.ffn_dim, rng),
                                LayerNorm(params_, p + ".norm2", d)});
  }

  NumArray qe({config_.queries, d});
  for (double& v : qe.data()) v = rng.normal();
  query_embed_ = &params_.add("query_embed", std::move(qe));
  NumArray qr({config_.queries, 2});
  for (double& v : qr.data()) {
    const double u = rng.uniform(0.05, 0.95);
    v = std::log(u / (1.0 - u));
  }
  query_ref_ = &params_.add("query_ref", std::move(qr));

  for (std::size_t i = 0; i < config_.decoder_layers; ++i) {
    const std::string p = fmt::format("decoder{}", i);
    dec_.push_back(DecoderLayer{MultiHeadAttention(params_, p + ".self_attn", d, config_.heads, rng),
                                LayerNorm(params_, p + ".norm1", d),
                                DeformableAttention(params_, p + ".cross_attn", d, config_.heads, nl, config_.points,
                                                    rng),
                                LayerNorm(params_, p + ".norm2", d),
                                FeedForward(params_, p + ".ffn", d, config_.ffn_dim, rng),
                                LayerNorm(params_, p + ".norm3", d)});
  }

  class_head_ = Linear(params_, "class_head", d, 2, rng);
  box_hidden1_ = Linear(params_, "box_head.hidden1", d, d, rng);
  box_hidden2_ = Linear(params_, "box_head.hidden2", d, d, rng);
  box_out_ = Linear(params_, "box_head.out", d, 4, rng);
  for (double& v : box_out_.weight->value.data()) v = 0.0;
  box_out_.bias->value[2] = -2.0;
  box_out_.bias->value[3] = -2.0;
}

Pyramid Detector::backbone(Graph& g, Var image) const {
  const Shape& s = image.shape();
  if (s.size() != 3 || s[0] != 1) throw DimensionError("backbone: image must be [1, H, W]");
  const std::size_t div = std::size_t{1} << (config_.stride_exponent + config_.levels - 1);
  if (s[1] % div != 0 || s[2] % div != 0) {
    throw ContractError(fmt::format("backbone: input {}x{} is not divisible by {}", s[1], s[2], div));
  }
  Pyramid out;
  Var x = num::relu(stages_[0](g, image));
  for (std::size_t i = 1; i < stages_.size(); ++i) {
    x = num::relu(stages_[i](g, x));
    out.levels.push_back(input_proj_[i - 1](g, x));
  }
  return out;
}

std::vector<LevelShape> level_shapes(const Pyramid& pyramid) {
  std::vector<LevelShape> shapes;
  for (const Var& v : pyramid.levels) shapes.push_back({v.shape()[1], v.shape()[2]});
  return shapes;
}

Var flatten_levels(const Pyramid& pyramid) {
  std::vector<Var> parts;
  for (const Var& v : pyramid.levels) parts.push_back(num::chw_to_tokens(v));
  return parts.size() == 1 ? parts[0] : num::concat_rows(parts);
}

NumArray sinusoid_encoding(std::span<const LevelShape> shapes, std::size_t dim) {
  std::size_t total = 0;
  for (const LevelShape& s : shapes) total += s.pixels();
  const std::size_t half = dim / 2;
  NumArray pe({total, dim});
  std::size_t row = 0;
  for (const LevelShape& s : shapes) {
    for (std::size_t i = 0; i < s.height; ++i) {
      for (std::size_t j = 0; j < s.width; ++j, ++row) {
        const double y = (static_cast<double>(i) + 0.5) / static_cast<double>(s.height) * 2.0 * std::numbers::pi;
        const double x = (static_cast<double>(j) + 0.5) / static_cast<double>(s.width) * 2.0 * std::numbers::pi;
        for (std::size_t k = 0; k < half; ++k) {
          const double freq = std::pow(10000.0, static_cast<double>(2 * (k / 2)) / static_cast<double>(half));
          pe[row * dim + k] = k % 2 == 0 ? std::sin(y / freq) : std::cos(y / freq);
          pe[row * dim + half + k] = k % 2 == 0 ? std::sin(x / freq) : std::cos(x / freq);
        }
      }
    }
  }
  return pe;
}

NumArray pixel_reference_points(std::span<const LevelShape> shapes) {
  std::size_t total = 0;
  for (const LevelShape& s : shapes) total += s.pixels();
  NumArray ref({total, 2});
  std::size_t row = 0;
  for (const LevelShape& s : shapes) {
    for (std::size_t i = 0; i < s.height; ++i) {
      for (std::size_t j = 0; j < s.width; ++j, ++row) {
        ref[2 * row] = (static_cast<double>(j) + 0.5) / static_cast<double>(s.width);
        ref[2 * row + 1] = (static_cast<double>(i) + 0.5) / static_cast<double>(s.height);
      }
    }
  }
  return ref;
}

Pyramid Detector::encoder(Graph& g, const Pyramid& pyramid) const {
  if (pyramid.levels.size() != config_.levels) {
    throw DimensionError(fmt::format("encoder: expected {} levels, got {}", config_.levels, pyramid.levels.size()));
  }
  if (enc_.empty()) return pyramid;
  const std::vector<LevelShape> shapes = level_shapes(pyramid);
  std::size_t total = 0;
  for (const LevelShape& s : shapes) total += s.pixels();
  NumArray onehot({total, config_.levels}, 0.0);
  std::size_t row = 0;
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    for (std::size_t p = 0; p < shapes[l].pixels(); ++p, ++row) onehot[row * config_.levels + l] = 1.0;
  }
  Var pos = num::add(g.constant(sinusoid_encoding(shapes, config_.d_model)),
                     num::matmul(g.constant(std::move(onehot)), g.parameter(*level_embed_)));
  Var ref = g.constant(pixel_reference_points(shapes));
  Var src = flatten_levels(pyramid);
  for (const EncoderLayer& layer : enc_) {
    src = layer.norm1(g, num::add(src, layer.attn(g, num::add(src, pos), ref, src, shapes)));
    src = layer.norm2(g, num::add(src, layer.ffn(g, src)));
  }
  Pyramid out;
  std::size_t start = 0;
  for (const LevelShape& s : shapes) {
    out.levels.push_back(num::tokens_to_chw(num::slice_rows(src, start, start + s.pixels()), s.height, s.width));
    start += s.pixels();
  }
  return out;
}

QuerySet Detector::queries(Graph& g) const { return {g.parameter(*query_embed_), g.parameter(*query_ref_)}; }

std::vector<Var> Detector::decoder(Graph& g, const QuerySet& q, const Pyramid& memory) const {
  const std::vector<LevelShape> shapes = level_shapes(memory);
  Var tokens = flatten_levels(memory);
  Var pos = q.embeddings;
  Var ref = num::sigmoid(q.reference_logits);
  Var tgt = g.constant(NumArray({pos.shape()[0], config_.d_model}, 0.0));
  std::vector<Var> outs;
  for (const DecoderLayer& layer : dec_) {
    Var qk = num::add(tgt, pos);
    tgt = layer.norm1(g, num::add(tgt, layer.self_attn(g, qk, qk, tgt)));
    tgt = layer.norm2(g, num::add(tgt, layer.cross_attn(g, num::add(tgt, pos), ref, tokens, shapes)));
    tgt = layer.norm3(g, num::add(tgt, layer.ffn(g, tgt)));
    outs.push_back(tgt);
  }
  return outs;
}

DetectionSet Detector::predict(Graph& g, Var decoded, Var reference_logits) const {
  const std::size_t nq = decoded.shape()[0];
  Var logits = class_head_(g, decoded);
  Var probs = num::softmax(logits, 1);
  Var h = num::relu(box_hidden1_(g, decoded));
  h = num::relu(box_hidden2_(g, h));
  const Var anchor_parts[2] = {reference_logits, g.constant(NumArray({nq, 2}, 0.0))};
  Var boxes = num::sigmoid(num::add(box_out_(g, h), num::concat_cols(anchor_parts)));
  return {logits, probs, boxes};
}

std::vector<DetectionSet> Detector::forward(Graph& g, Var image) const {
  Pyramid memory = encoder(g, backbone(g, image));
  QuerySet q = queries(g);
  std::vector<DetectionSet> out;
  for (Var h : decoder(g, q, memory)) out.push_back(predict(g, h, q.reference_logits));
  return out;
}

}  // namespace ulm::det
