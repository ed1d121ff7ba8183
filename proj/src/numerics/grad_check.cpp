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

#include "ulm/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "ulm/errors.hpp"

namespace ulm::num {
namespace {

double evaluate(const ScalarFunction& f, const NumArray& x) {
  Graph g;
  Var out = f(g, g.input(x, false));
  if (out.value().size() != 1) throw ContractError("grad_check: function output is not a scalar");
  return out.value()[0];
}

double evaluate(const ParameterFunction& f) {
  Graph g;
  Var out = f(g);
  if (out.value().size() != 1) throw ContractError("grad_check: function output is not a scalar");
  return out.value()[0];
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

}  // namespace

GradCheckReport grad_check_report(const ScalarFunction& f, const NumArray& x, double eps) {
  GradCheckReport r;
  {
    Graph g;
    Var in = g.input(x, true);
    Var out = f(g, in);
    if (out.value().size() != 1) throw ContractError("grad_check: function output is not a scalar");
    g.backward(out);
    r.analytic = g.grad(in);
  }
  r.numeric = NumArray(x.shape(), 0.0);
  NumArray probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + eps;
    const double up = evaluate(f, probe);
    probe[i] = x[i] - eps;
    const double down = evaluate(f, probe);
    probe[i] = x[i];
    r.numeric[i] = (up - down) / (2.0 * eps);
    const double e = relative_error(r.analytic[i], r.numeric[i]);
    if (e > r.max_relative_error) {
      r.max_relative_error = e;
      r.worst_index = i;
    }
  }
  return r;
}

double grad_check(const ScalarFunction& f, const NumArray& x, double eps) {
  return grad_check_report(f, x, eps).max_relative_error;
}

double grad_check_parameters(const ParameterFunction& f, std::span<Parameter* const> params, double eps) {
  std::vector<NumArray> analytic;
  {
    Graph g;
    Var out = f(g);
    if (out.value().size() != 1) throw ContractError("grad_check: function output is not a scalar");
    g.backward(out);
    const auto bound = g.parameter_grads();
    for (Parameter* p : params) {
      NumArray grad(p->value.shape(), 0.0);
      for (const auto& pg : bound) {
        if (pg.parameter == p && pg.grad != nullptr) grad = *pg.grad;
      }
      analytic.push_back(std::move(grad));
    }
  }
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    NumArray& value = params[k]->value;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + eps;
      const double up = evaluate(f);
      value[i] = saved - eps;
      const double down = evaluate(f);
      value[i] = saved;
      worst = std::max(worst, relative_error(analytic[k][i], (up - down) / (2.0 * eps)));
    }
  }
  return worst;
}

}  // namespace ulm::num
