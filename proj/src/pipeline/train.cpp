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

#include "ulm/pipeline/train.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "ulm/dataset/patches.hpp"
#include "ulm/errors.hpp"

namespace ulm::pipe {

using num::Graph;
using num::Var;

Sample make_sample(const sim::Frame& patch) {
  const std::size_t h = patch.height(), w = patch.width();
  Sample s{patch.image.reshaped({1, h, w}), {}};
  const double fw = static_cast<double>(w), fh = static_cast<double>(h);
  for (const sim::MbAnnotation& a : patch.annotations) {
    const Box& b = a.box;
    if (!(b.w > 0.0 && b.h > 0.0)) continue;
    // Box centre, so the normalized target is a consistent (cx, cy, w, h).
    s.boxes.push_back({(b.x + 0.5 * b.w) / fw, (b.y + 0.5 * b.h) / fh, b.w / fw, b.h / fh});
  }
  return s;
}

std::vector<sim::Frame> patches_of(const std::vector<sim::Frame>& frames) {
  std::vector<sim::Frame> out;
  out.reserve(frames.size() * data::kPatchCount);
  for (const sim::Frame& f : frames) {
    const auto layout = data::PatchLayout::for_frame(f.height(), f.width());
    for (sim::Frame& p : data::split_patches(f, layout)) out.push_back(std::move(p));
  }
  return out;
}

SampleResult sample_loss(const det::Detector& detector, const Sample& sample, const crit::LossWeights& weights,
                         bool with_grads) {
  Graph g;
  const Var image = g.constant(sample.image);
  const auto layers = detector.forward(g, image);
  const crit::SetLoss loss = crit::set_loss(layers, sample.boxes, weights);
  SampleResult out;
  out.loss = loss.loss.value()[0];
  if (!with_grads) return out;
  g.backward(loss.loss);
  std::unordered_map<const num::Parameter*, const NumArray*> by_param;
  for (const auto& pg : g.parameter_grads()) by_param[pg.parameter] = pg.grad;
  for (const num::Parameter* p : detector.parameters().all()) {
    auto it = by_param.find(p);
    out.grads.push_back(it != by_param.end() && it->second ? *it->second : NumArray(p->value.shape()));
  }
  return out;
}

namespace {

num::AdamConfig adam_config(const TrainConfig& c) {
  num::AdamConfig a;
  a.learning_rate = c.learning_rate;
  a.weight_decay = c.weight_decay;
  a.clip_norm = c.clip_norm;
  return a;
}

}  // namespace

Trainer::Trainer(det::Detector& detector, const TrainConfig& config, std::uint64_t seed)
    : detector_(detector), config_(config), seed_(seed), adam_(detector.parameters().all(), adam_config(config)) {
  if (config.batch_size == 0) throw ConfigError("train: batch size must be positive");
}

double Trainer::rate_for(std::size_t epoch) const {
  if (config_.lr_drop_epoch > 0 && epoch >= config_.lr_drop_epoch) {
    return config_.learning_rate * config_.lr_drop_factor;
  }
  return config_.learning_rate;
}

EpochStats Trainer::run_epoch(const std::vector<sim::Frame>& patches, std::size_t threads) {
  if (patches.empty()) throw ContractError("train: no training patches");
  const auto start = std::chrono::steady_clock::now();
  const Rng epoch_rng = Rng(seed_).split(epoch_ + 1);
  Rng order_rng = epoch_rng.split(0);
  std::vector<std::size_t> order(patches.size());
  std::iota(order.begin(), order.end(), 0);
  order_rng.shuffle(order);

  adam_.set_learning_rate(rate_for(epoch_));
  EpochStats stats;
  stats.learning_rate = rate_for(epoch_);
  threads = std::max<std::size_t>(threads, 1);

  for (std::size_t begin = 0; begin < order.size(); begin += config_.batch_size) {
    const std::size_t end = std::min(order.size(), begin + config_.batch_size);
    const std::size_t n = end - begin;
    std::vector<SampleResult> results(n);
    auto work = [&](std::size_t k) {
      const std::size_t pos = begin + k;
      const sim::Frame& patch = patches[order[pos]];
      Sample s;
      if (config_.augment) {
        Rng draw_rng = epoch_rng.split(1000 + pos);
        s = make_sample(data::augment(patch, draw_rng, config_.augmentation));
      } else {
        s = make_sample(patch);
      }
      results[k] = sample_loss(detector_, s, config_.loss, true);
    };
    if (threads == 1 || n == 1) {
      for (std::size_t k = 0; k < n; ++k) work(k);
    } else {
      std::vector<std::jthread> pool;
      const std::size_t t = std::min(threads, n);
      for (std::size_t w = 0; w < t; ++w) {
        pool.emplace_back([&, w] {
          for (std::size_t k = w; k < n; k += t) work(k);
        });
      }
    }
    std::vector<NumArray> total = std::move(results[0].grads);
    stats.loss += results[0].loss;
    for (std::size_t k = 1; k < n; ++k) {
      stats.loss += results[k].loss;
      for (std::size_t i = 0; i < total.size(); ++i) {
        const auto src = results[k].grads[i].data();
        const auto dst = total[i].data();
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
      }
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (NumArray& gsum : total) {
      for (double& v : gsum.data()) v *= inv;
    }
    stats.grad_norm += adam_.step(total);
    ++stats.steps;
  }
  ++epoch_;
  stats.epoch = epoch_;
  stats.loss /= static_cast<double>(patches.size());
  stats.grad_norm /= static_cast<double>(stats.steps);
  stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return stats;
}

det::Checkpoint Trainer::checkpoint() const {
  det::Checkpoint ck = det::detector_checkpoint(detector_);
  const auto params = detector_.parameters().all();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!adam_.first_moments().empty()) {
      ck.tensors.push_back({"adam.m." + params[i]->name, adam_.first_moments()[i]});
      ck.tensors.push_back({"adam.v." + params[i]->name, adam_.second_moments()[i]});
    }
  }
  ck.metadata["training"] = {{"epochs_done", epoch_}, {"adam_steps", adam_.steps()}, {"seed", seed_}};
  return ck;
}

void Trainer::resume(const det::Checkpoint& ck) {
  det::restore_parameters(detector_, ck);
  if (!ck.metadata.contains("training")) throw ConfigError("checkpoint holds no training state");
  const auto& t = ck.metadata["training"];
  if (t.at("seed").get<std::uint64_t>() != seed_) {
    throw ConfigError(fmt::format("checkpoint was trained with seed {}, not {}", t.at("seed").get<std::uint64_t>(), seed_));
  }
  epoch_ = t.at("epochs_done").get<std::size_t>();
  const auto steps = t.at("adam_steps").get<std::uint64_t>();
  if (steps == 0) return;
  std::unordered_map<std::string, const NumArray*> stored;
  for (const auto& nt : ck.tensors) stored[nt.name] = &nt.value;
  std::vector<NumArray> m, v;
  for (const num::Parameter* p : detector_.parameters().all()) {
    auto im = stored.find("adam.m." + p->name), iv = stored.find("adam.v." + p->name);
    if (im == stored.end() || iv == stored.end()) throw ConfigError("checkpoint: missing optimizer state for " + p->name);
    m.push_back(*im->second);
    v.push_back(*iv->second);
  }
  adam_.restore(steps, std::move(m), std::move(v));
}

}  // namespace ulm::pipe
