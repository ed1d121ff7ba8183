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

#include "ulm/numerics/graph.hpp"

#include <algorithm>
#include <fmt/format.h>

#include "ulm/errors.hpp"
#include "ulm/numerics/rng.hpp"

namespace ulm::num {

const NumArray& Var::value() const {
  if (graph == nullptr) throw ContractError("Var: unbound handle");
  return graph->value(*this);
}

Var Graph::input(NumArray value, bool requires_grad) {
  value.require_finite("input");
  Node n;
  n.value = std::move(value);
  n.rule = "input";
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Graph::parameter(const Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
  p.value.require_finite(p.name);
  Node n;
  n.value = p.value;
  n.rule = "parameter";
  n.requires_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return {this, nodes_.size() - 1};
}

Var Graph::record(std::string_view rule, NumArray value, std::vector<Var> parents, BackwardRule backward) {
  value.require_finite(rule);
  Node n;
  n.value = std::move(value);
  n.rule = std::string(rule);
  n.parents.reserve(parents.size());
  for (const Var& p : parents) {
    if (p.graph != this) throw ContractError(fmt::format("{}: operand from another graph", rule));
    n.parents.push_back(p.id);
    n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

NumArray& Graph::grad_mut(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.empty()) n.grad = NumArray(n.value.shape(), 0.0);
  return n.grad;
}

void Graph::accumulate(Var v, const NumArray& delta) {
  if (!nodes_[v.id].requires_grad) return;
  NumArray& g = grad_mut(v);
  if (g.shape() != delta.shape()) {
    throw DimensionError(fmt::format("gradient shape {} for value {}", shape_string(delta.shape()),
                                     shape_string(g.shape())));
  }
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

NumArray Graph::grad(Var v) const {
  const Node& n = nodes_[v.id];
  return n.grad.empty() ? NumArray(n.value.shape(), 0.0) : n.grad;
}

void Graph::seed(Var loss) {
  if (loss.graph != this) throw ContractError("backward: loss from another graph");
  if (nodes_[loss.id].value.size() != 1) throw ContractError("backward: loss must be a scalar");
  for (Node& n : nodes_) n.grad = NumArray();
  nodes_[loss.id].grad = NumArray(nodes_[loss.id].value.shape(), 1.0);
}

void Graph::run_rule(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.backward || n.grad.empty()) return;
  // The rule may grow parents' buffers but never this node's.
  const NumArray& g = n.grad;
  n.backward(*this, g);
}

void Graph::backward(Var loss) {
  seed(loss);
  for (std::size_t id = loss.id + 1; id-- > 0;) run_rule(id);
}

void Graph::backward(Var loss, std::span<const std::size_t> order) {
  seed(loss);
  std::vector<std::size_t> position(nodes_.size(), nodes_.size());
  for (std::size_t i = 0; i < order.size(); ++i) position[order[i]] = i;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    for (std::size_t p : nodes_[id].parents) {
      if (position[id] < nodes_.size() && position[p] >= position[id]) {
        throw ContractError("backward: order is not topological");
      }
    }
  }
  for (std::size_t i = order.size(); i-- > 0;) run_rule(order[i]);
}

std::vector<std::size_t> Graph::topological_order(Var loss, Rng* shuffle) const {
  // Ancestors of loss.
  std::vector<char> keep(nodes_.size(), 0);
  std::vector<std::size_t> stack{loss.id};
  keep[loss.id] = 1;
  while (!stack.empty()) {
    std::size_t id = stack.back();
    stack.pop_back();
    for (std::size_t p : nodes_[id].parents) {
      if (!keep[p]) {
        keep[p] = 1;
        stack.push_back(p);
      }
    }
  }
  // Kahn's algorithm over the kept subgraph.
  std::vector<std::size_t> indegree(nodes_.size(), 0);
  std::vector<std::vector<std::size_t>> children(nodes_.size());
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (!keep[id]) continue;
    for (std::size_t p : nodes_[id].parents) {
      ++indegree[id];
      children[p].push_back(id);
    }
  }
  std::vector<std::size_t> ready, order;
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (keep[id] && indegree[id] == 0) ready.push_back(id);
  }
  while (!ready.empty()) {
    std::size_t pick = ready.size() - 1;
    if (shuffle != nullptr) pick = static_cast<std::size_t>(shuffle->integer(0, static_cast<std::int64_t>(pick)));
    std::size_t id = ready[pick];
    ready.erase(ready.begin() + static_cast<std::ptrdiff_t>(pick));
    order.push_back(id);
    for (std::size_t c : children[id]) {
      if (--indegree[c] == 0) ready.push_back(c);
    }
  }
  return order;
}

std::vector<Graph::ParameterGrad> Graph::parameter_grads() const {
  std::vector<ParameterGrad> out;
  for (const Node& n : nodes_) {
    if (n.param != nullptr) out.push_back({n.param, n.grad.empty() ? nullptr : &n.grad});
  }
  return out;
}

}  // namespace ulm::num
