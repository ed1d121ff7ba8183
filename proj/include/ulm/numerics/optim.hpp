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
#include <span>
#include <vector>

#include "ulm/numerics/graph.hpp"

namespace ulm::num {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;  // decoupled (AdamW)
  double clip_norm = 0.0;     // 0 disables global-norm clipping
};

/// AdamW over an ordered parameter list. Moments are indexed like the list.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config);

  // Applies one update from per-parameter gradients (same order and
  // shapes as the parameter list). Returns the pre-clip gradient norm.
  double step(std::span<const NumArray> grads);

  std::uint64_t steps() const { return steps_; }
  const std::vector<NumArray>& first_moments() const { return m_; }
  const std::vector<NumArray>& second_moments() const { return v_; }
  void restore(std::uint64_t steps, std::vector<NumArray> m, std::vector<NumArray> v);
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  std::vector<NumArray> m_, v_;
  std::uint64_t steps_ = 0;
};

}  // namespace ulm::num
