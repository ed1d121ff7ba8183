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

#include <cstddef>
#include <span>
#include <string>

#include "ulm/detector/deform_attn.hpp"
#include "ulm/numerics/graph.hpp"
#include "ulm/numerics/parameters.hpp"
#include "ulm/numerics/rng.hpp"

namespace ulm::det {

// Glorot-uniform weights, zero bias.
struct Linear {
  num::Parameter* weight = nullptr;  // [in, out]
  num::Parameter* bias = nullptr;    // [out]

  Linear() = default;
  Linear(num::ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  num::Var operator()(num::Graph& g, num::Var x) const;
};

struct LayerNorm {
  num::Parameter* gamma = nullptr;
  num::Parameter* beta = nullptr;

  LayerNorm() = default;
  LayerNorm(num::ParameterSet& ps, const std::string& name, std::size_t dim);
  num::Var operator()(num::Graph& g, num::Var x) const;
};

// He-normal 3x3 or 1x1 convolution followed by group normalization.
struct ConvNorm {
  num::Parameter* weight = nullptr;
  num::Parameter* bias = nullptr;
  num::Parameter* gamma = nullptr;
  num::Parameter* beta = nullptr;
  std::size_t stride = 1;
  std::size_t pad = 0;
  std::size_t groups = 1;

  ConvNorm() = default;
  ConvNorm(num::ParameterSet& ps, const std::string& name, std::size_t in, std::size_t out, std::size_t kernel,
           std::size_t stride, Rng& rng);
  num::Var operator()(num::Graph& g, num::Var x) const;
};

struct FeedForward {
  Linear up;
  Linear down;

  FeedForward() = default;
  FeedForward(num::ParameterSet& ps, const std::string& name, std::size_t dim, std::size_t hidden, Rng& rng);
  num::Var operator()(num::Graph& g, num::Var x) const;
};

// Multi-scale deformable attention: per-query offsets and weights come from
// the query embedding; values from a linear projection of the level tokens.
struct DeformableAttention {
  Linear value_proj;
  Linear offset_head;
  Linear weight_head;
  Linear output_proj;
  std::size_t heads = 1;
  std::size_t levels = 1;
  std::size_t points = 1;

  DeformableAttention() = default;
  DeformableAttention(num::ParameterSet& ps, const std::string& name, std::size_t dim, std::size_t heads,
                      std::size_t levels, std::size_t points, Rng& rng);

  // query [Nq, D], ref [Nq, 2] normalized, tokens [S, D].
  num::Var operator()(num::Graph& g, num::Var query, num::Var ref, num::Var tokens,
                      std::span<const LevelShape> shapes) const;
  // Softmax-normalized attention weights [Nq, M*L*K].
  num::Var attention_weights(num::Graph& g, num::Var query) const;
};

// Dense scaled dot-product attention among a small set of queries.
struct MultiHeadAttention {
  Linear q_proj;
  Linear k_proj;
  Linear v_proj;
  Linear out_proj;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(num::ParameterSet& ps, const std::string& name, std::size_t dim, std::size_t heads, Rng& rng);
  num::Var operator()(num::Graph& g, num::Var query, num::Var key, num::Var value) const;
};

// Largest of 8, 4, 2, 1 dividing `channels`.
std::size_t norm_groups(std::size_t channels);

}  // namespace ulm::det
