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

#include "ulm/dataset/split.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "ulm/errors.hpp"
#include "ulm/io/files.hpp"
#include "ulm/log.hpp"
#include "ulm/numerics/kernels.hpp"

namespace ulm::data {

using nlohmann::json;

namespace {

// Zero-mean, unit-norm copy of the image; empty when the image is constant.
std::vector<double> standardize(const NumArray& image) {
  const auto px = image.data();
  const double mean = std::accumulate(px.begin(), px.end(), 0.0) / static_cast<double>(px.size());
  std::vector<double> z(px.size());
  double ss = 0.0;
  for (std::size_t i = 0; i < px.size(); ++i) {
    z[i] = px[i] - mean;
    ss += z[i] * z[i];
  }
  if (!(ss > 0.0)) return {};
  const double inv = 1.0 / std::sqrt(ss);
  for (double& v : z) v *= inv;
  return z;
}

double clamp_unit(double v) { return std::clamp(v, -1.0, 1.0); }

}  // namespace

Correlation frame_correlation(const sim::Frame& a, const sim::Frame& b) {
  if (a.image.shape() != b.image.shape()) {
    throw DimensionError(fmt::format("frame_correlation: shapes {} and {} differ", shape_string(a.image.shape()),
                                     shape_string(b.image.shape())));
  }
  const auto za = standardize(a.image), zb = standardize(b.image);
  if (za.empty() || zb.empty()) {
    log::warn("constant frame in correlation of frames {} and {}; using 0", a.index, b.index);
    return {0.0, true};
  }
  return {clamp_unit(kernels::dot(za, zb)), false};
}

CorrelationMatrix correlation_matrix(const std::vector<sim::Frame>& frames, std::size_t threads) {
  const std::size_t n = frames.size();
  CorrelationMatrix out{NumArray({std::max<std::size_t>(n, 1), std::max<std::size_t>(n, 1)}, 0.0), {}};
  if (n == 0) {
    out.values = NumArray();
    return out;
  }
  std::vector<std::vector<double>> z(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (frames[i].image.shape() != frames[0].image.shape()) {
      throw DimensionError("correlation_matrix: frames must share one shape");
    }
    z[i] = standardize(frames[i].image);
    if (z[i].empty()) {
      out.constant_frames.push_back(i);
      log::warn("frame {} is constant; its correlations are defined as 0", frames[i].index);
    }
  }
  double* m = out.values.ptr();
  auto rows = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < n; i += stride) {
      m[i * n + i] = z[i].empty() ? 0.0 : 1.0;
      for (std::size_t j = i + 1; j < n; ++j) {
        const double c = (z[i].empty() || z[j].empty()) ? 0.0 : clamp_unit(kernels::dot(z[i], z[j]));
        m[i * n + j] = c;
        m[j * n + i] = c;
      }
    }
  };
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    rows(0, 1);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(rows, t, threads);
  }
  return out;
}

std::string matrix_digest(const NumArray& m) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : m.data()) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xffU;
      h *= 0x100000001b3ULL;
    }
  }
  return fmt::format("{:016x}", h);
}

SplitManifest split_by_correlation(const std::vector<sim::Frame>& frames, std::size_t test_size, double threshold,
                                   Rng& rng, std::size_t threads) {
  const std::size_t n = frames.size();
  if (test_size >= n) {
    throw ContractError(fmt::format("split: test size {} must be below the frame count {}", test_size, n));
  }
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ContractError("split: threshold must lie in (0, 1]");

  const CorrelationMatrix cm = correlation_matrix(frames, threads);
  const double* c = cm.values.ptr();

  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (c[i * n + j] >= threshold) parent[find(i)] = find(j);
    }
  }

  struct Component {
    std::vector<std::size_t> members;
    double outside = -1.0;  // strongest correlation to a frame outside the component
  };
  std::unordered_map<std::size_t, std::size_t> slot;
  std::vector<Component> comps;
  for (std::size_t i = 0; i < n; ++i) {
    auto [it, fresh] = slot.try_emplace(find(i), comps.size());
    if (fresh) comps.emplace_back();
    comps[it->second].members.push_back(i);
  }
  for (Component& comp : comps) {
    const std::size_t root = find(comp.members.front());
    for (std::size_t i : comp.members) {
      for (std::size_t j = 0; j < n; ++j) {
        if (find(j) != root) comp.outside = std::max(comp.outside, c[i * n + j]);
      }
    }
  }

  rng.shuffle(comps);
  std::stable_sort(comps.begin(), comps.end(), [](const Component& a, const Component& b) {
    if (a.members.size() != b.members.size()) return a.members.size() < b.members.size();
    return a.outside < b.outside;
  });

  std::vector<bool> is_test(n, false);
  std::size_t taken = 0;
  for (const Component& comp : comps) {
    if (taken + comp.members.size() > test_size) continue;
    for (std::size_t i : comp.members) is_test[i] = true;
    taken += comp.members.size();
  }

  SplitManifest m;
  m.threshold = threshold;
  m.requested_test_size = test_size;
  m.shortfall = test_size - taken;
  m.correlation_digest = matrix_digest(cm.values);
  for (std::size_t i = 0; i < n; ++i) (is_test[i] ? m.test_ids : m.train_ids).push_back(frames[i].index);
  if (m.shortfall > 0) {
    log::warn("split: only {} of {} requested test frames meet the correlation threshold {}",
                                     taken, test_size, threshold);
  }
  return m;
}

double max_cross_correlation(const NumArray& corr, const std::vector<sim::Frame>& frames, const SplitManifest& m) {
  const std::size_t n = frames.size();
  if (corr.rank() != 2 || corr.dim(0) != n || corr.dim(1) != n) {
    throw DimensionError("max_cross_correlation: matrix does not match the frame list");
  }
  std::unordered_map<std::int64_t, std::size_t> pos;
  for (std::size_t i = 0; i < n; ++i) pos[frames[i].index] = i;
  double worst = -1.0;
  for (std::int64_t t : m.test_ids) {
    for (std::int64_t r : m.train_ids) worst = std::max(worst, corr.at(pos.at(t), pos.at(r)));
  }
  return worst;
}

json manifest_to_json(const SplitManifest& m) {
  return {{"train_ids", m.train_ids},
          {"test_ids", m.test_ids},
          {"threshold", m.threshold},
          {"correlation_digest", m.correlation_digest},
          {"requested_test_size", m.requested_test_size},
          {"shortfall", m.shortfall}};
}

SplitManifest manifest_from_json(const json& j) {
  try {
    SplitManifest m;
    m.train_ids = j.at("train_ids").get<std::vector<std::int64_t>>();
    m.test_ids = j.at("test_ids").get<std::vector<std::int64_t>>();
    m.threshold = j.at("threshold").get<double>();
    m.correlation_digest = j.at("correlation_digest").get<std::string>();
    m.requested_test_size = j.value("requested_test_size", m.test_ids.size());
    m.shortfall = j.value("shortfall", std::size_t{0});
    return m;
  } catch (const json::exception& e) {
    throw IoError(fmt::format("split manifest: {}", e.what()));
  }
}

void write_manifest(const std::filesystem::path& path, const SplitManifest& m) {
  io::write_json(path, manifest_to_json(m));
}

SplitManifest read_manifest(const std::filesystem::path& path) { return manifest_from_json(io::read_json(path)); }

}  // namespace ulm::data
