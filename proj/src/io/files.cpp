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

#include "ulm/io/files.hpp"

#include <png.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <fmt/format.h>

#include "ulm/errors.hpp"

namespace ulm::io {

void write_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError(fmt::format("cannot create directory {}: {}", path.parent_path().string(), ec.message()));
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  fs::rename(tmp, path, ec);
  if (ec) throw IoError(fmt::format("cannot rename {} -> {}: {}", tmp.string(), path.string(), ec.message()));
}

void write_atomic(const fs::path& path, std::string_view text) {
  write_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(fmt::format("{}: invalid JSON: {}", path.string(), e.what()));
  }
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_atomic(path, j.dump(2) + "\n"); }

fs::path sidecar_path(const fs::path& raw_path) {
  fs::path p = raw_path;
  p.replace_extension(".json");
  return p;
}

void write_raw_f32(const fs::path& raw_path, const RawImage& image, const nlohmann::json& sidecar_extra) {
  static_assert(std::endian::native == std::endian::little, "raw writer assumes a little-endian host");
  if (image.pixels.size() != image.width * image.height) throw ContractError("write_raw_f32: pixel count mismatch");
  nlohmann::json side = sidecar_extra;
  side["width"] = image.width;
  side["height"] = image.height;
  side["dtype"] = "float32";
  write_atomic(raw_path, std::span(reinterpret_cast<const std::uint8_t*>(image.pixels.data()),
                                   image.pixels.size() * sizeof(float)));
  write_json(sidecar_path(raw_path), side);
}

RawImage read_raw_f32(const fs::path& raw_path) {
  const nlohmann::json side = read_json(sidecar_path(raw_path));
  if (side.value("dtype", "") != "float32") throw IoError(raw_path.string() + ": unsupported dtype");
  RawImage img;
  img.width = side.at("width").get<std::size_t>();
  img.height = side.at("height").get<std::size_t>();
  const auto bytes = read_bytes(raw_path);
  if (bytes.size() != img.width * img.height * sizeof(float)) {
    throw IoError(fmt::format("{}: expected {} bytes, found {}", raw_path.string(), img.width * img.height * 4,
                              bytes.size()));
  }
  img.pixels.resize(img.width * img.height);
  std::memcpy(img.pixels.data(), bytes.data(), bytes.size());
  return img;
}

namespace {

void png_append(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void png_noop_flush(png_structp) {}

struct PngReadCursor {
  std::span<const std::uint8_t> bytes;
  std::size_t offset = 0;
};

void png_consume(png_structp png, png_bytep data, png_size_t length) {
  auto* cur = static_cast<PngReadCursor*>(png_get_io_ptr(png));
  if (cur->offset + length > cur->bytes.size()) png_error(png, "truncated PNG");
  std::memcpy(data, cur->bytes.data() + cur->offset, length);
  cur->offset += length;
}

}  // namespace

std::vector<std::uint8_t> encode_png(std::span<const std::uint8_t> pixels, std::size_t width, std::size_t height,
                                     int channels) {
  if (channels != 1 && channels != 3) throw ContractError("encode_png: channels must be 1 or 3");
  if (pixels.size() != width * height * static_cast<std::size_t>(channels)) {
    throw ContractError("encode_png: pixel buffer size mismatch");
  }
  std::vector<std::uint8_t> out;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    throw IoError("encode_png: libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("encode_png: libpng error");
  }
  png_set_write_fn(png, &out, &png_append, &png_noop_flush);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = width * static_cast<std::size_t>(channels);
  for (std::size_t r = 0; r < height; ++r) {
    png_write_row(png, const_cast<png_bytep>(pixels.data() + r * stride));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

PngImage decode_png(std::span<const std::uint8_t> bytes) {
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("decode_png: libpng initialisation failed");
  }
  PngReadCursor cursor{bytes, 0};
  PngImage img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("decode_png: invalid PNG");
  }
  png_set_read_fn(png, &cursor, &png_consume);
  png_read_info(png, info);
  img.width = png_get_image_width(png, info);
  img.height = png_get_image_height(png, info);
  img.channels = png_get_channels(png, info);
  if (png_get_bit_depth(png, info) != 8) png_error(png, "only 8-bit PNGs are supported");
  const std::size_t stride = img.width * static_cast<std::size_t>(img.channels);
  img.pixels.resize(stride * img.height);
  for (std::size_t r = 0; r < img.height; ++r) png_read_row(png, img.pixels.data() + r * stride, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

}  // namespace ulm::io
