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

#include <cstdint>
#include <vector>

#include "ulm/detector/config.hpp"
#include "ulm/detector/layers.hpp"
#include "ulm/numerics/graph.hpp"
#include "ulm/numerics/parameters.hpp"

namespace ulm::det {

// Level l is [D, H_l, W_l], finest first.
struct Pyramid {
  std::vector<num::Var> levels;
};

// Reference points are sigmoid(reference_logits), normalized (x, y).
struct QuerySet {
  num::Var embeddings;        // [Nq, D]
  num::Var reference_logits;  // [Nq, 2]
};

struct DetectionSet {
  num::Var class_logits;   // [Nq, 2]: microbubble, no-object
  num::Var probabilities;  // softmax of class_logits
  num::Var boxes;          // [Nq, 4]: cx, cy, w, h normalized to the input
};

class Detector {
 public:
  Detector(const DetectorConfig& config, std::uint64_t seed);
  Detector(const Detector&) = delete;
  Detector& operator=(const Detector&) = delete;

  const DetectorConfig& config() const { return config_; }
  num::ParameterSet& parameters() { return params_; }
  const num::ParameterSet& parameters() const { return params_; }

  // image [1, H, W] with H, W divisible by 2^(s + L - 1).
  Pyramid backbone(num::Graph& g, num::Var image) const;
  Pyramid encoder(num::Graph& g, const Pyramid& pyramid) const;
  QuerySet queries(num::Graph& g) const;
  // One [Nq, D] output per decoder layer.
  std::vector<num::Var> decoder(num::Graph& g, const QuerySet& queries, const Pyramid& memory) const;
  DetectionSet predict(num::Graph& g, num::Var decoded, num::Var reference_logits) const;
  // Predictions of every decoder layer; the last entry is the final output.
  std::vector<DetectionSet> forward(num::Graph& g, num::Var image) const;

  const DeformableAttention& encoder_attention(std::size_t layer) const { return enc_[layer].attn; }

 private:
  struct EncoderLayer {
    DeformableAttention attn;
    LayerNorm norm1;
    FeedForward ffn;
    LayerNorm norm2;
  };
  struct DecoderLayer {
    MultiHeadAttention self_attn;
    LayerNorm norm1;
    DeformableAttention cross_attn;
    LayerNorm norm2;
    FeedForward ffn;
    LayerNorm norm3;
  };

  DetectorConfig config_;
  num::ParameterSet params_;
  std::vector<ConvNorm> stages_;
  std::vector<ConvNorm> input_proj_;
  num::Parameter* level_embed_ = nullptr;  // [L, D]
  std::vector<EncoderLayer> enc_;
  num::Parameter* query_embed_ = nullptr;  // [Nq, D]
  num::Parameter* query_ref_ = nullptr;    // [Nq, 2]
  std::vector<DecoderLayer> dec_;
  Linear class_head_;
  Linear box_hidden1_;
  Linear box_hidden2_;
  Linear box_out_;
};

std::vector<LevelShape> level_shapes(const Pyramid& pyramid);
// Stacks level tokens into [S, D].
num::Var flatten_levels(const Pyramid& pyramid);
// Fixed 2-D sinusoidal encoding [S, D] of normalized pixel centres.
NumArray sinusoid_encoding(std::span<const LevelShape> shapes, std::size_t dim);
// Normalized (x, y) pixel centres [S, 2].
NumArray pixel_reference_points(std::span<const LevelShape> shapes);

}  // namespace ulm::det
