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
#include <cstdint>
#include <functional>
#include <vector>

#include "ulm/criterion/criterion.hpp"
#include "ulm/dataset/augment.hpp"
#include "ulm/detector/checkpoint.hpp"
#include "ulm/detector/detector.hpp"
#include "ulm/numerics/optim.hpp"
#include "ulm/simulator/simulator.hpp"

namespace ulm::pipe {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 4;
  double learning_rate = 5e-4;
  double weight_decay = 1e-4;
  double clip_norm = 0.1;
  std::size_t lr_drop_epoch = 15;  // 0 keeps the rate constant
  double lr_drop_factor = 0.1;
  bool augment = true;
  data::AugmentSpec augmentation;
  crit::LossWeights loss;
  double time_budget_seconds = 0.0;  // 0 disables; otherwise stop before an epoch would overrun
  std::size_t validate_every = 1;    // 0 disables validation
};

// Network input: image [1, H, W] and ground truth normalized to (0, 1).
struct Sample {
  NumArray image;
  std::vector<CenterBox> boxes;
};
Sample make_sample(const sim::Frame& patch);

// All 2x2 patches of every frame, in frame order.
std::vector<sim::Frame> patches_of(const std::vector<sim::Frame>& frames);

struct SampleResult {
  double loss = 0.0;
  std::vector<NumArray> grads;  // parameter order; empty when not requested
};
SampleResult sample_loss(const det::Detector& detector, const Sample& sample, const crit::LossWeights& weights,
                         bool with_grads);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based count of completed epochs
  double loss = 0.0;      // mean pre-update sample loss
  double grad_norm = 0.0; // mean pre-clip norm over steps
  double learning_rate = 0.0;
  std::size_t steps = 0;
  double seconds = 0.0;
};

// Mini-batch AdamW over per-sample gradients summed in sample order, so the
// result does not depend on the thread count. Every epoch draws its order
// and augmentations from a stream derived from (seed, epoch), which makes a
// resumed run continue exactly like an uninterrupted one.
class Trainer {
 public:
  Trainer(det::Detector& detector, const TrainConfig& config, std::uint64_t seed);

  EpochStats run_epoch(const std::vector<sim::Frame>& patches, std::size_t threads = 1);
  std::size_t epochs_done() const { return epoch_; }
  const TrainConfig& config() const { return config_; }

  // Detector parameters plus optimizer moments and progress.
  det::Checkpoint checkpoint() const;
  void resume(const det::Checkpoint& ck);

 private:
  double rate_for(std::size_t epoch) const;

  det::Detector& detector_;
  TrainConfig config_;
  std::uint64_t seed_;
  num::Adam adam_;
  std::size_t epoch_ = 0;
};

}  // namespace ulm::pipe
