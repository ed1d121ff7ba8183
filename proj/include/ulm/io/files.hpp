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
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace ulm::io {

namespace fs = std::filesystem;

// Writes to a sibling temp file, then renames over `path`. Parent
// directories are created. Throws IoError.
void write_atomic(const fs::path& path, std::span<const std::uint8_t> bytes);
void write_atomic(const fs::path& path, std::string_view text);
std::vector<std::uint8_t> read_bytes(const fs::path& path);
std::string read_text(const fs::path& path);

nlohmann::json read_json(const fs::path& path);
// Pretty-printed with a trailing newline.
void write_json(const fs::path& path, const nlohmann::json& j);

// Little-endian float32 raster with a JSON sidecar
// {"width","height","dtype":"float32","frame_index"}.
struct RawImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> pixels;  // row-major
};
void write_raw_f32(const fs::path& raw_path, const RawImage& image, const nlohmann::json& sidecar_extra);
RawImage read_raw_f32(const fs::path& raw_path);
fs::path sidecar_path(const fs::path& raw_path);

// 8-bit PNG encoding; `channels` is 1 (gray) or 3 (RGB).
std::vector<std::uint8_t> encode_png(std::span<const std::uint8_t> pixels, std::size_t width, std::size_t height,
                                     int channels);
struct PngImage {
  std::size_t width = 0;
  std::size_t height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;
};
PngImage decode_png(std::span<const std::uint8_t> bytes);

}  // namespace ulm::io
