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

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "ulm/detector/detector.hpp"

namespace ulm::det {

inline constexpr char kCheckpointMagic[8] = {'U', 'L', 'M', 'D', 'E', 'T', 'R', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  NumArray value;
};

// Layout: 8 magic bytes, u32 version, u64 metadata length, metadata JSON,
// then every tensor as little-endian f64 in order. Tensor names and shapes
// are listed in metadata["tensors"].
struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<NamedTensor> tensors;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Parameters in declaration order, with metadata["detector"] = config.
Checkpoint detector_checkpoint(const Detector& d);
// Copies matching tensors into the detector; throws ConfigError when the
// stored configuration or any parameter shape disagrees.
void restore_parameters(Detector& d, const Checkpoint& ck);
std::unique_ptr<Detector> load_detector(const Checkpoint& ck);

}  // namespace ulm::det
