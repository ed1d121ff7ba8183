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
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ulm/numerics/array.hpp"

namespace ulm {
class Rng;
}

namespace ulm::num {

class Graph;

/// Handle to a node of a Graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const NumArray& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Named trainable tensor. Parameters live outside any graph; a graph binds
/// them as leaves and reports their gradients after backward().
struct Parameter {
  std::string name;
  NumArray value;
};

/// Reverse-mode computation graph (a tape). Nodes are appended in creation
/// order, which is therefore a valid topological order.
class Graph {
 public:
  // Called during backward with the node's accumulated output gradient.
  using BackwardRule = std::function<void(Graph&, const NumArray& grad_out)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var input(NumArray value, bool requires_grad = false);
  Var constant(NumArray value) { return input(std::move(value), false); }
  // Binds a parameter as a leaf; repeated calls return the same node.
  Var parameter(const Parameter& p);

  // Adds a node produced by primitive `rule`. The value is checked for
  // non-finite entries; the backward rule is dropped when no parent needs
  // a gradient.
  Var record(std::string_view rule, NumArray value, std::vector<Var> parents, BackwardRule backward);

  const NumArray& value(Var v) const { return nodes_[v.id].value; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::string_view rule(Var v) const { return nodes_[v.id].rule; }
  std::span<const std::size_t> upstream(Var v) const { return nodes_[v.id].parents; }
  std::size_t size() const { return nodes_.size(); }

  // Gradient buffer of v, zero-allocated on first access. For backward rules.
  NumArray& grad_mut(Var v);
  void accumulate(Var v, const NumArray& delta);
  // Gradient after backward(); zeros when v received none.
  NumArray grad(Var v) const;

  // Seeds d(loss)/d(loss) = 1 and runs every rule in reverse creation order.
  void backward(Var loss);
  // Same, with a caller-supplied topological order of the loss's ancestors.
  void backward(Var loss, std::span<const std::size_t> order);
  // Topological order (parents before children) of the ancestors of `loss`;
  // ties broken randomly when `shuffle` is given.
  std::vector<std::size_t> topological_order(Var loss, Rng* shuffle) const;

  // Parameter leaves bound to this graph with their gradients.
  struct ParameterGrad {
    const Parameter* parameter;
    const NumArray* grad;  // null when the parameter got no gradient
  };
  std::vector<ParameterGrad> parameter_grads() const;

 private:
  struct Node {
    NumArray value;
    NumArray grad;
    std::vector<std::size_t> parents;
    std::string rule;
    BackwardRule backward;
    bool requires_grad = false;
    const Parameter* param = nullptr;
  };

  void seed(Var loss);
  void run_rule(std::size_t id);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

// ---- primitives -----------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var sum(Var a);
// x[N,D] + v[D] broadcast over rows.
Var add_rowvec(Var x, Var v);

// y = x W + b, x[N,Din], W[Din,Dout], b[Dout].
Var linear(Var x, Var w, Var b);
// a[N,K] b[K,M] or, with transpose_b, a[N,K] b[M,K]^T.
Var matmul(Var a, Var b, bool transpose_b = false);

Var relu(Var x);
Var sigmoid(Var x);
// Max-subtracted softmax along `axis`.
Var softmax(Var x, std::size_t axis);

// Row-wise normalization of x[N,D] with per-feature gain and bias.
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
// x[C,H,W] normalized over groups of C/groups channels.
Var group_norm(Var x, std::size_t groups, Var gamma, Var beta, double eps = 1e-5);
// x[Ci,H,W], w[Co,Ci,k,k], b[Co]; zero padding.
Var conv2d(Var x, Var w, Var b, std::size_t stride, std::size_t pad);

Var reshape(Var x, Shape shape);
// [C,H,W] -> [H*W, C] and back.
Var chw_to_tokens(Var x);
Var tokens_to_chw(Var t, std::size_t height, std::size_t width);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var x, std::size_t begin, std::size_t end);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var x, std::size_t begin, std::size_t end);

/// Bilinear interpolation of feat[C,H,W] at points[P,2] given as
/// (row, col) in pixel-index coordinates. Neighbours outside the map read
/// as zero. Returns [P,C]; differentiable w.r.t. feat and points.
Var bilinear_sample(Var feat, Var points);

}  // namespace ulm::num
