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

#include "ulm/renderer/renderer.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <thread>

#include "ulm/errors.hpp"
#include "ulm/io/files.hpp"

namespace ulm::render {

namespace {

constexpr double kQuantum = 0x1p-32;

// Gaussian weights sampled at SR pixel centres within the truncation window.
struct Window {
  std::ptrdiff_t first = 0;
  std::vector<double> weights;
};

Window window_1d(double centre, double sigma, double half_width) {
  Window w;
  w.first = static_cast<std::ptrdiff_t>(std::ceil(centre - half_width - 0.5));
  const auto last = static_cast<std::ptrdiff_t>(std::floor(centre + half_width - 0.5));
  for (std::ptrdiff_t j = w.first; j <= last; ++j) {
    const double d = (static_cast<double>(j) + 0.5 - centre) / sigma;
    w.weights.push_back(std::exp(-0.5 * d * d));
  }
  return w;
}

}  // namespace

void RenderConfig::validate() const {
  if (factor < 1 || factor > 64) throw ConfigError(fmt::format("render factor {} outside [1, 64]", factor));
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("render sigma must be positive");
  if (!(truncation >= 1.0) || !std::isfinite(truncation)) throw ConfigError("render truncation must be >= 1");
}

namespace {
NumArray empty_grid(std::size_t h, std::size_t w, const RenderConfig& c) {
  c.validate();
  if (h == 0 || w == 0) throw ContractError("SrMap: empty frame");
  return NumArray({h * c.factor, w * c.factor});
}
}  // namespace

SrMap::SrMap(std::size_t h, std::size_t w, const RenderConfig& c)
    : grid(empty_grid(h, w, c)), frame_height(h), frame_width(w), config(c) {}

double SrMap::mass() const {
  double m = 0.0;
  for (double v : grid.data()) m += v;
  return m;
}

void splat(SrMap& map, Point c) {
  if (!(c.x >= 0.0 && c.x <= static_cast<double>(map.frame_width) && c.y >= 0.0 &&
        c.y <= static_cast<double>(map.frame_height))) {
    throw ContractError(fmt::format("splat: centroid ({}, {}) outside {}x{} frame", c.x, c.y, map.frame_width,
                                    map.frame_height));
  }
  const double f = static_cast<double>(map.config.factor);
  const double half = map.config.truncation * map.config.sigma;
  const Window wx = window_1d(c.x * f, map.config.sigma, half);
  const Window wy = window_1d(c.y * f, map.config.sigma, half);

  double total = 0.0;
  for (double a : wy.weights) {
    for (double b : wx.weights) total += a * b;
  }
  std::vector<double> q(wy.weights.size() * wx.weights.size());
  double qsum = 0.0;
  std::size_t peak = 0;
  for (std::size_t i = 0; i < wy.weights.size(); ++i) {
    for (std::size_t j = 0; j < wx.weights.size(); ++j) {
      const std::size_t k = i * wx.weights.size() + j;
      q[k] = std::round(wy.weights[i] * wx.weights[j] / total / kQuantum) * kQuantum;
      qsum += q[k];
      if (q[k] > q[peak]) peak = k;
    }
  }
  q[peak] += 1.0 - qsum;  // exact: every term is a multiple of 2^-32 below 2

  const auto rows = static_cast<std::ptrdiff_t>(map.grid.dim(0));
  const auto cols = static_cast<std::ptrdiff_t>(map.grid.dim(1));
  for (std::size_t i = 0; i < wy.weights.size(); ++i) {
    const std::ptrdiff_t r = wy.first + static_cast<std::ptrdiff_t>(i);
    if (r < 0 || r >= rows) continue;
    for (std::size_t j = 0; j < wx.weights.size(); ++j) {
      const std::ptrdiff_t col = wx.first + static_cast<std::ptrdiff_t>(j);
      if (col < 0 || col >= cols) continue;
      map.grid[static_cast<std::size_t>(r * cols + col)] += q[i * wx.weights.size() + j];
    }
  }
  ++map.points;
}

void accumulate(SrMap& into, const SrMap& other) {
  if (into.grid.shape() != other.grid.shape() || into.config.factor != other.config.factor ||
      into.config.sigma != other.config.sigma || into.config.truncation != other.config.truncation) {
    throw ContractError("accumulate: maps differ in shape or configuration");
  }
  const auto dst = into.grid.data();
  const auto src = other.grid.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  into.frames += other.frames;
  into.points += other.points;
}

SrMap render_sequence(const std::vector<std::vector<Point>>& frames, std::size_t frame_height,
                      std::size_t frame_width, const RenderConfig& config, std::size_t threads) {
  if (frames.empty()) throw ContractError("render_sequence: no frames");
  threads = std::clamp<std::size_t>(threads, 1, frames.size());
  std::vector<SrMap> partial(threads, SrMap(frame_height, frame_width, config));
  {
    std::vector<std::jthread> workers;
    for (std::size_t t = 0; t < threads; ++t) {
      workers.emplace_back([&, t] {
        for (std::size_t f = t; f < frames.size(); f += threads) {
          for (const Point& p : frames[f]) splat(partial[t], p);
          ++partial[t].frames;
        }
      });
    }
  }
  for (std::size_t t = 1; t < threads; ++t) accumulate(partial[0], partial[t]);
  return std::move(partial[0]);
}

Colormap colormap_from_string(const std::string& name) {
  if (name == "gray") return Colormap::gray;
  if (name == "hot") return Colormap::hot;
  throw ConfigError(fmt::format("unknown colormap '{}' (expected gray or hot)", name));
}

std::vector<std::uint8_t> encode_image(const SrMap& map, Colormap colormap, double gamma) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw ContractError("encode_image: gamma must be positive");
  const auto g = map.grid.data();
  double peak = 0.0;
  for (double v : g) {
    if (!(v >= 0.0)) throw NumericError("encode_image: map has negative or non-finite values");
    peak = std::max(peak, v);
  }
  const int channels = colormap == Colormap::gray ? 1 : 3;
  std::vector<std::uint8_t> pixels(g.size() * static_cast<std::size_t>(channels), 0);
  auto level = [](double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); };
  if (peak > 0.0) {
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = std::pow(g[i] / peak, gamma);
      if (colormap == Colormap::gray) {
        pixels[i] = level(v);
      } else {
        pixels[3 * i] = level(3.0 * v);
        pixels[3 * i + 1] = level(3.0 * v - 1.0);
        pixels[3 * i + 2] = level(3.0 * v - 2.0);
      }
    }
  }
  return io::encode_png(pixels, map.grid.dim(1), map.grid.dim(0), channels);
}

void export_image(const SrMap& map, const std::filesystem::path& path, Colormap colormap, double gamma) {
  io::write_atomic(path, encode_image(map, colormap, gamma));
}

void export_raw(const SrMap& map, const std::filesystem::path& path) {
  io::RawImage raw{map.grid.dim(1), map.grid.dim(0), {}};
  raw.pixels.reserve(map.grid.size());
  for (double v : map.grid.data()) raw.pixels.push_back(static_cast<float>(v));
  io::write_raw_f32(path, raw,
                    {{"factor", map.config.factor},
                     {"sigma", map.config.sigma},
                     {"truncation", map.config.truncation},
                     {"frames", map.frames},
                     {"points", map.points},
                     {"mass", map.mass()}});
}

}  // namespace ulm::render
