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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ulm/dataset/split.hpp"
#include "ulm/evaluation/evaluation.hpp"
#include "ulm/pipeline/config.hpp"
#include "ulm/postprocess/postprocess.hpp"
#include "ulm/renderer/renderer.hpp"

namespace ulm::pipe {

namespace fs = std::filesystem;

enum class Subset { all, train, test };
Subset subset_from_string(const std::string& name);  // ConfigError

// Every command writes its effective configuration to
// `<output dir>/config.<command>.json`.

// Frames, ground truth and a COCO file in `out`. The COCO file is read back
// and validated before returning.
void cmd_simulate(const PipelineConfig& config, const fs::path& out);

struct SplitOutcome {
  data::SplitManifest manifest;
  double max_cross_correlation = 0.0;  // from an independent pairwise pass
};
SplitOutcome cmd_split(const PipelineConfig& config, const fs::path& data_dir, const fs::path& manifest_path);
// Recomputes every test/train correlation pair directly from the frames.
double verify_split(const std::vector<sim::Frame>& frames, const data::SplitManifest& manifest);

struct TrainOutcome {
  std::size_t epochs_done = 0;
  bool budget_exhausted = false;
  double last_loss = 0.0;
  std::optional<eval::EvalReport> validation;
};
// Trains on the manifest's training frames, validates on its test frames and
// rewrites the checkpoint and the JSON-lines log after every epoch. With
// `resume`, an existing checkpoint is continued.
TrainOutcome cmd_train(const PipelineConfig& config, const fs::path& data_dir, const fs::path& manifest_path,
                       const fs::path& checkpoint_path, const fs::path& log_path, bool resume);

// `manifest_path` may be empty when `subset` is all.
std::vector<post::Detection> cmd_infer(const PipelineConfig& config, const fs::path& checkpoint_path,
                                       const fs::path& data_dir, const fs::path& manifest_path, Subset subset,
                                       const fs::path& out);

// Writes report.json and report.txt into `out_dir`.
eval::EvalReport cmd_evaluate(const PipelineConfig& config, const fs::path& detections_path, const fs::path& data_dir,
                              const fs::path& manifest_path, Subset subset, const fs::path& out_dir);

// Renders detections, or the ground truth when `detections_path` is empty,
// to `<out_dir>/<name>.png` and `<out_dir>/<name>.f32`.
render::SrMap cmd_render(const PipelineConfig& config, const fs::path& detections_path, const fs::path& data_dir,
                         const fs::path& manifest_path, Subset subset, const fs::path& out_dir,
                         const std::string& name);

// Frames of `subset` in manifest order (all: file order).
std::vector<sim::Frame> select_frames(std::vector<sim::Frame> frames, const fs::path& manifest_path, Subset subset,
                                      std::size_t max_frames = 0);

}  // namespace ulm::pipe
