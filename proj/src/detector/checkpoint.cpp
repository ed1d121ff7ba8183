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

#include "ulm/detector/checkpoint.hpp"

#include <fmt/format.h>

#include <bit>
#include <cstring>
#include <unordered_map>

#include "ulm/errors.hpp"
#include "ulm/io/files.hpp"

namespace ulm::det {

using nlohmann::json;

namespace {

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(std::span<const std::uint8_t> in, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[at + static_cast<std::size_t>(i)]) << (8 * i);
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  json meta = ck.metadata;
  json listing = json::array();
  for (const NamedTensor& t : ck.tensors) listing.push_back({{"name", t.name}, {"shape", t.value.shape()}});
  meta["tensors"] = listing;
  const std::string text = meta.dump();
  std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 8);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(kCheckpointVersion >> (8 * i)));
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const NamedTensor& t : ck.tensors) {
    for (double v : t.value.data()) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw IoError("checkpoint: missing magic bytes");
  }
  std::uint32_t version = 0;
  for (int i = 0; i < 4; ++i) version |= static_cast<std::uint32_t>(bytes[8 + static_cast<std::size_t>(i)]) << (8 * i);
  if (version != kCheckpointVersion) throw IoError(fmt::format("checkpoint: unsupported version {}", version));
  const std::uint64_t len = get_u64(bytes, 12);
  if (20 + len > bytes.size()) throw IoError("checkpoint: truncated metadata");
  Checkpoint ck;
  try {
    ck.metadata = json::parse(bytes.begin() + 20, bytes.begin() + 20 + static_cast<std::ptrdiff_t>(len));
  } catch (const json::exception& e) {
    throw IoError(fmt::format("checkpoint: bad metadata ({})", e.what()));
  }
  std::size_t at = 20 + len;
  try {
    for (const json& t : ck.metadata.at("tensors")) {
      NumArray value(t.at("shape").get<Shape>());
      if (at + 8 * value.size() > bytes.size()) throw IoError("checkpoint: truncated tensor data");
      for (double& v : value.data()) {
        v = std::bit_cast<double>(get_u64(bytes, at));
        at += 8;
      }
      ck.tensors.push_back({t.at("name").get<std::string>(), std::move(value)});
    }
  } catch (const json::exception& e) {
    throw IoError(fmt::format("checkpoint: bad tensor listing ({})", e.what()));
  }
  if (at != bytes.size()) throw IoError("checkpoint: trailing bytes after tensor data");
  ck.metadata.erase("tensors");
  return ck;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  io::write_atomic(path, encode_checkpoint(ck));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(io::read_bytes(path)); }

Checkpoint detector_checkpoint(const Detector& d) {
  Checkpoint ck;
  ck.metadata["detector"] = to_json(d.config());
  for (const num::Parameter* p : d.parameters().all()) ck.tensors.push_back({p->name, p->value});
  return ck;
}

void restore_parameters(Detector& d, const Checkpoint& ck) {
  if (!ck.metadata.contains("detector")) throw ConfigError("checkpoint: no detector configuration stored");
  if (detector_config_from_json(ck.metadata["detector"]) != d.config()) {
    throw ConfigError("checkpoint: stored detector configuration differs from the requested one");
  }
  std::unordered_map<std::string, const NumArray*> stored;
  for (const NamedTensor& t : ck.tensors) stored[t.name] = &t.value;
  for (num::Parameter* p : d.parameters().all()) {
    auto it = stored.find(p->name);
    if (it == stored.end()) throw ConfigError("checkpoint: missing parameter " + p->name);
    if (it->second->shape() != p->value.shape()) {
      throw ConfigError(fmt::format("checkpoint: parameter {} has shape {}, expected {}", p->name,
                                    shape_string(it->second->shape()), shape_string(p->value.shape())));
    }
    p->value = *it->second;
  }
}

std::unique_ptr<Detector> load_detector(const Checkpoint& ck) {
  if (!ck.metadata.contains("detector")) throw ConfigError("checkpoint: no detector configuration stored");
  auto d = std::make_unique<Detector>(detector_config_from_json(ck.metadata["detector"]), 0);
  restore_parameters(*d, ck);
  return d;
}

}  // namespace ulm::det
