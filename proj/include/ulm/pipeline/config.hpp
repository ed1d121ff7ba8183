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
#include <filesystem>
#include <string>

#include "json.hpp"
#include "ulm/criterion/criterion.hpp"
#include "ulm/detector/config.hpp"
#include "ulm/evaluation/evaluation.hpp"
#include "ulm/pipeline/infer.hpp"
#include "ulm/pipeline/train.hpp"
#include "ulm/renderer/renderer.hpp"
#include "ulm/simulator/simulator.hpp"

namespace ulm::pipe {

struct SplitConfig {
  std::size_t test_size = 100;
  double threshold = 0.18;
};

struct RenderSettings {
  render::RenderConfig map;
  std::string colormap = "hot";
  double gamma = 0.5;
};

struct PipelineConfig {
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  sim::DatasetSpec simulate;
  SplitConfig split;
  std::size_t max_train_frames = 500;  // 0 uses every training frame
  det::DetectorConfig detector;
  TrainConfig train;  // train.loss holds the set-loss weights
  InferConfig infer;
  eval::EvalConfig evaluate;
  RenderSettings render;
};

// Sections: seed, threads, simulate, split, detector, loss, train,
// postprocess, evaluate, render. Missing keys keep their defaults; unknown
// keys, wrong types and out-of-range values raise ConfigError.
PipelineConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const PipelineConfig& c);
void validate(const PipelineConfig& c);
PipelineConfig load_config(const std::filesystem::path& path);

}  // namespace ulm::pipe
