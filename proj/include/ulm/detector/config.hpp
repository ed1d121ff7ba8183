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

#include "json.hpp"

namespace ulm::det {

struct DetectorConfig {
  std::size_t input_height = 64;  // patch size seen by the network
  std::size_t input_width = 64;
  std::size_t d_model = 64;
  std::size_t heads = 4;
  std::size_t points = 4;  // sampling points per head per level
  std::size_t levels = 2;
  std::size_t stride_exponent = 2;  // level l has stride 2^(l + stride_exponent)
  std::size_t encoder_layers = 2;
  std::size_t decoder_layers = 2;
  std::size_t queries = 25;
  std::size_t ffn_dim = 128;
  std::size_t stem_channels = 16;
  std::size_t mid_channels = 32;

  std::size_t level_height(std::size_t l) const { return input_height >> (l + stride_exponent); }
  std::size_t level_width(std::size_t l) const { return input_width >> (l + stride_exponent); }
  std::size_t sampled_keys() const { return heads * levels * points; }

  // Throws ConfigError on any inconsistency, including the sampling budget
  // heads * levels * points < pixels of the coarsest level.
  void validate() const;

  friend bool operator==(const DetectorConfig&, const DetectorConfig&) = default;
};

nlohmann::json to_json(const DetectorConfig& c);
// Unknown keys are rejected; missing keys keep their defaults.
DetectorConfig detector_config_from_json(const nlohmann::json& j);

}  // namespace ulm::det
