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

#include "ulm/numerics/optim.hpp"

#include <cmath>

#include "ulm/errors.hpp"

namespace ulm::num {

Adam::Adam(std::vector<Parameter*> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const Parameter* p : params_) {
    m_.emplace_back(p->value.shape(), 0.0);
    v_.emplace_back(p->value.shape(), 0.0);
  }
}

double Adam::step(std::span<const NumArray> grads) {
  if (grads.size() != params_.size()) throw DimensionError("Adam::step: gradient count mismatch");
  double sq = 0.0;
  for (std::size_t k = 0; k < grads.size(); ++k) {
    if (grads[k].shape() != params_[k]->value.shape()) {
      throw DimensionError("Adam::step: gradient shape mismatch for " + params_[k]->name);
    }
    for (double g : grads[k].data()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("Adam::step: non-finite gradient norm");
  const double clip = (config_.clip_norm > 0.0 && norm > config_.clip_norm) ? config_.clip_norm / norm : 1.0;

  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    NumArray& w = params_[k]->value;
    NumArray& m = m_[k];
    NumArray& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = grads[k][i] * clip;
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      const double update = (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.epsilon);
      w[i] -= config_.learning_rate * (update + config_.weight_decay * w[i]);
    }
  }
  return norm;
}

void Adam::restore(std::uint64_t steps, std::vector<NumArray> m, std::vector<NumArray> v) {
  if (m.size() != params_.size() || v.size() != params_.size()) {
    throw DimensionError("Adam::restore: moment count mismatch");
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (m[k].shape() != params_[k]->value.shape() || v[k].shape() != params_[k]->value.shape()) {
      throw DimensionError("Adam::restore: moment shape mismatch for " + params_[k]->name);
    }
  }
  steps_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace ulm::num
