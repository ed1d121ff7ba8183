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
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "ulm/numerics/array.hpp"
#include "ulm/numerics/rng.hpp"
#include "ulm/simulator/simulator.hpp"

namespace ulm::data {

struct Correlation {
  double value = 0.0;
  bool degenerate = false;  // at least one input had zero variance; value is then 0
};

// Pearson correlation of the flattened intensities.
Correlation frame_correlation(const sim::Frame& a, const sim::Frame& b);

struct CorrelationMatrix {
  NumArray values;  // [N, N], symmetric, unit diagonal for non-constant frames
  std::vector<std::size_t> constant_frames;
};
CorrelationMatrix correlation_matrix(const std::vector<sim::Frame>& frames, std::size_t threads = 1);

// FNV-1a over the little-endian bytes of the matrix, as 16 hex digits.
std::string matrix_digest(const NumArray& m);

struct SplitManifest {
  std::vector<std::int64_t> train_ids;
  std::vector<std::int64_t> test_ids;
  double threshold = 0.18;
  std::string correlation_digest;
  std::size_t requested_test_size = 0;
  std::size_t shortfall = 0;
};

// Test frames are whole connected components of the graph joining frames whose
// correlation reaches `threshold`; smaller and more isolated components go first.
SplitManifest split_by_correlation(const std::vector<sim::Frame>& frames, std::size_t test_size, double threshold,
                                   Rng& rng, std::size_t threads = 1);

// Largest correlation between any test frame and any training frame.
double max_cross_correlation(const NumArray& corr, const std::vector<sim::Frame>& frames, const SplitManifest& m);

nlohmann::json manifest_to_json(const SplitManifest& m);
SplitManifest manifest_from_json(const nlohmann::json& j);
void write_manifest(const std::filesystem::path& path, const SplitManifest& m);
SplitManifest read_manifest(const std::filesystem::path& path);

}  // namespace ulm::data
