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

#include "ulm/detector/config.hpp"

#include <fmt/format.h>

#include "ulm/errors.hpp"

namespace ulm::det {

using nlohmann::json;

void DetectorConfig::validate() const {
  if (d_model == 0 || heads == 0 || points == 0 || queries == 0 || ffn_dim == 0) {
    throw ConfigError("detector: widths, heads, points, queries and ffn_dim must be positive");
  }
  if (stem_channels == 0 || mid_channels == 0) throw ConfigError("detector: backbone channels must be positive");
  if (d_model % heads != 0) throw ConfigError(fmt::format("detector: d_model {} not divisible by heads {}", d_model, heads));
  if (d_model % 4 != 0) throw ConfigError("detector: d_model must be a multiple of 4 for the positional encoding");
  if (levels < 2) throw ConfigError("detector: at least two pyramid levels are required");
  if (stride_exponent < 1 || stride_exponent > 2) throw ConfigError("detector: stride_exponent must be 1 or 2");
  const std::size_t div = std::size_t{1} << (stride_exponent + levels - 1);
  if (input_height == 0 || input_width == 0 || input_height % div != 0 || input_width % div != 0) {
    throw ConfigError(fmt::format("detector: input {}x{} must be divisible by {}", input_height, input_width, div));
  }
  const std::size_t coarse = level_height(levels - 1) * level_width(levels - 1);
  if (sampled_keys() >= coarse) {
    throw ConfigError(fmt::format("detector: {} sampled keys per query must stay below the {} pixels of the coarsest level",
                                  sampled_keys(), coarse));
  }
}

json to_json(const DetectorConfig& c) {
  return {{"input_height", c.input_height}, {"input_width", c.input_width},
          {"d_model", c.d_model},           {"heads", c.heads},
          {"points", c.points},             {"levels", c.levels},
          {"stride_exponent", c.stride_exponent}, {"encoder_layers", c.encoder_layers},
          {"decoder_layers", c.decoder_layers},   {"queries", c.queries},
          {"ffn_dim", c.ffn_dim},           {"stem_channels", c.stem_channels},
          {"mid_channels", c.mid_channels}};
}

DetectorConfig detector_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("detector: configuration must be an object");
  DetectorConfig c;
  for (const auto& [key, value] : j.items()) {
    std::size_t* slot = nullptr;
    if (key == "input_height") slot = &c.input_height;
    else if (key == "input_width") slot = &c.input_width;
    else if (key == "d_model") slot = &c.d_model;
    else if (key == "heads") slot = &c.heads;
    else if (key == "points") slot = &c.points;
    else if (key == "levels") slot = &c.levels;
    else if (key == "stride_exponent") slot = &c.stride_exponent;
    else if (key == "encoder_layers") slot = &c.encoder_layers;
    else if (key == "decoder_layers") slot = &c.decoder_layers;
    else if (key == "queries") slot = &c.queries;
    else if (key == "ffn_dim") slot = &c.ffn_dim;
    else if (key == "stem_channels") slot = &c.stem_channels;
    else if (key == "mid_channels") slot = &c.mid_channels;
    else throw ConfigError(fmt::format("detector: unknown key '{}'", key));
    if (!value.is_number_unsigned()) throw ConfigError(fmt::format("detector: '{}' must be a non-negative integer", key));
    *slot = value.get<std::size_t>();
  }
  c.validate();
  return c;
}

}  // namespace ulm::det
