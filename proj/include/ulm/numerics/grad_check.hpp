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

#include <functional>
#include <span>

#include "ulm/numerics/graph.hpp"

namespace ulm::num {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  NumArray analytic;
  NumArray numeric;
};

// Builds a scalar-valued graph from an input leaf.
using ScalarFunction = std::function<Var(Graph&, Var)>;
// Builds a scalar-valued graph that binds its own parameters.
using ParameterFunction = std::function<Var(Graph&)>;

/// Compares reverse-mode gradients of f at x with central differences.
/// Error per coordinate is |analytic - numeric| / max(1, |analytic|).
/// Throws ContractError when f does not return a scalar.
GradCheckReport grad_check_report(const ScalarFunction& f, const NumArray& x, double eps = 1e-5);
double grad_check(const ScalarFunction& f, const NumArray& x, double eps = 1e-5);

/// Same check over every coordinate of each listed parameter.
double grad_check_parameters(const ParameterFunction& f, std::span<Parameter* const> params, double eps = 1e-5);

}  // namespace ulm::num
