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
#include <vector>

#include "ulm/detector/detector.hpp"
#include "ulm/evaluation/evaluation.hpp"
#include "ulm/postprocess/postprocess.hpp"
#include "ulm/simulator/simulator.hpp"

namespace ulm::pipe {

struct InferConfig {
  double threshold = 0.5;
  post::MergeSpec merge;
};

// Patch split, one forward pass per patch, extraction and border merge.
std::vector<post::Detection> infer_frame(const det::Detector& detector, const sim::Frame& frame,
                                         const InferConfig& config);
// Frames are processed in parallel; the output is ordered by frame, then score.
std::vector<post::Detection> infer_frames(const det::Detector& detector, const std::vector<sim::Frame>& frames,
                                          const InferConfig& config, std::size_t threads = 1);

std::vector<eval::FrameTruth> truth_of(const std::vector<sim::Frame>& frames);

}  // namespace ulm::pipe
