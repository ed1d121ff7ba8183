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

#include "ulm/pipeline/config.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <variant>
#include <vector>

#include "ulm/errors.hpp"
#include "ulm/io/files.hpp"

namespace ulm::pipe {

using nlohmann::json;

namespace {

// Integers parsed from text are unsigned; ones built in code may be signed.
bool is_count(const json& v) { return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0); }

constexpr double kInf = std::numeric_limits<double>::infinity();

// Key bindings of one section, shared by parsing, dumping and range checks.
class Section {
 public:
  explicit Section(std::string name) : name_(std::move(name)) {}

  Section& real(const char* key, double& v, double lo, double hi, bool open_low = false) {
    fields_.push_back({key, &v, [=, &v, name = name_] {
                         if (!std::isfinite(v) || v > hi || v < lo || (open_low && v == lo)) {
                           throw ConfigError(fmt::format("{}.{} = {} outside {}{}, {}]", name, key, v,
                                                         open_low ? "(" : "[", lo, hi));
                         }
                       }});
    return *this;
  }
  Section& count(const char* key, std::size_t& v, std::size_t lo, std::size_t hi) {
    fields_.push_back({key, &v, [=, &v, name = name_] {
                         if (v < lo || v > hi) {
                           throw ConfigError(fmt::format("{}.{} = {} outside [{}, {}]", name, key, v, lo, hi));
                         }
                       }});
    return *this;
  }
  Section& flag(const char* key, bool& v) {
    fields_.push_back({key, &v, [] {}});
    return *this;
  }
  Section& text(const char* key, std::string& v, std::vector<std::string> allowed) {
    fields_.push_back({key, &v, [=, &v, name = name_] {
                         if (std::find(allowed.begin(), allowed.end(), v) == allowed.end()) {
                           throw ConfigError(fmt::format("{}.{} = '{}' is not one of [{}]", name, key, v,
                                                         fmt::join(allowed, ", ")));
                         }
                       }});
    return *this;
  }

  void read(const json& j) const {
    if (!j.is_object()) throw ConfigError(fmt::format("section '{}' must be an object", name_));
    for (const auto& [key, value] : j.items()) {
      const Field* f = find(key);
      if (!f) throw ConfigError(fmt::format("unknown key '{}.{}'", name_, key));
      std::visit(
          [&](auto* slot) {
            using T = std::remove_pointer_t<decltype(slot)>;
            bool ok = false;
            if constexpr (std::is_same_v<T, double>) ok = value.is_number();
            if constexpr (std::is_same_v<T, std::size_t>) ok = is_count(value);
            if constexpr (std::is_same_v<T, bool>) ok = value.is_boolean();
            if constexpr (std::is_same_v<T, std::string>) ok = value.is_string();
            if (!ok) throw ConfigError(fmt::format("'{}.{}' has the wrong type", name_, key));
            *slot = value.get<T>();
          },
          f->slot);
    }
  }
  json dump() const {
    json out = json::object();
    for (const Field& f : fields_) std::visit([&](auto* slot) { out[f.key] = *slot; }, f.slot);
    return out;
  }
  void check() const {
    for (const Field& f : fields_) f.check();
  }

 private:
  struct Field {
    std::string key;
    std::variant<double*, std::size_t*, bool*, std::string*> slot;
    std::function<void()> check;
  };
  const Field* find(const std::string& key) const {
    for (const Field& f : fields_) {
      if (f.key == key) return &f;
    }
    return nullptr;
  }

  std::string name_;
  std::vector<Field> fields_;
};

Section simulate_section(sim::DatasetSpec& d) {
  sim::SceneSpec& s = d.scene;
  Section sec("simulate");
  sec.count("frames", d.frames, 1, 1000000)
      .count("frames_per_clip", d.frames_per_clip, 1, 1000000)
      .count("density_min", d.density_min, 0, 1000)
      .count("density_max", d.density_max, 0, 1000)
      .count("width", s.width, 16, 4096)
      .count("height", s.height, 16, 4096)
      .count("vessel_count", s.vessel_count, 1, 256)
      .real("radius_min", s.radius_min, 0.0, 64.0, true)
      .real("radius_max", s.radius_max, 0.0, 64.0, true)
      .real("speed_min", s.speed_min, 0.0, 64.0)
      .real("speed_max", s.speed_max, 0.0, 64.0)
      .count("control_points", s.control_points, 2, 256)
      .real("segment_length", s.segment_length, 0.0, 4096.0, true)
      .real("noise_sigma", s.noise.sigma, 0.0, 10.0)
      .real("psf_lateral_top", s.psf.lateral_top, 0.0, 32.0, true)
      .real("psf_lateral_bottom", s.psf.lateral_bottom, 0.0, 32.0, true)
      .real("psf_axial_top", s.psf.axial_top, 0.0, 32.0, true)
      .real("psf_axial_bottom", s.psf.axial_bottom, 0.0, 32.0, true)
      .real("psf_amplitude", s.psf.amplitude, 0.0, 1000.0, true)
      .real("dt", s.dt, 0.0, 1000.0);
  return sec;
}

Section split_section(SplitConfig& s, std::size_t& max_train) {
  Section sec("split");
  sec.count("test_size", s.test_size, 0, 1000000)
      .real("threshold", s.threshold, 0.0, 1.0, true)
      .count("max_train_frames", max_train, 0, 1000000);
  return sec;
}

Section detector_section(det::DetectorConfig& c) {
  Section sec("detector");
  sec.count("input_height", c.input_height, 4, 4096)
      .count("input_width", c.input_width, 4, 4096)
      .count("d_model", c.d_model, 4, 1024)
      .count("heads", c.heads, 1, 64)
      .count("points", c.points, 1, 64)
      .count("levels", c.levels, 2, 6)
      .count("stride_exponent", c.stride_exponent, 1, 2)
      .count("encoder_layers", c.encoder_layers, 0, 12)
      .count("decoder_layers", c.decoder_layers, 1, 12)
      .count("queries", c.queries, 1, 1000)
      .count("ffn_dim", c.ffn_dim, 1, 8192)
      .count("stem_channels", c.stem_channels, 1, 1024)
      .count("mid_channels", c.mid_channels, 1, 1024);
  return sec;
}

Section loss_section(crit::LossWeights& w) {
  Section sec("loss");
  sec.real("class", w.cls, 0.0, 1000.0)
      .real("l1", w.l1, 0.0, 1000.0)
      .real("giou", w.giou, 0.0, 1000.0)
      .real("no_object", w.no_object, 0.0, 1.0, true);
  return sec;
}

Section train_section(TrainConfig& t) {
  Section sec("train");
  sec.count("epochs", t.epochs, 0, 100000)
      .count("batch_size", t.batch_size, 1, 4096)
      .real("learning_rate", t.learning_rate, 0.0, 1.0, true)
      .real("weight_decay", t.weight_decay, 0.0, 1.0)
      .real("clip_norm", t.clip_norm, 0.0, 1e6)
      .count("lr_drop_epoch", t.lr_drop_epoch, 0, 100000)
      .real("lr_drop_factor", t.lr_drop_factor, 0.0, 1.0, true)
      .flag("augment", t.augment)
      .real("flip_probability", t.augmentation.flip_probability, 0.0, 1.0)
      .real("scale_min", t.augmentation.scale_min, 0.1, 10.0)
      .real("scale_max", t.augmentation.scale_max, 0.1, 10.0)
      .real("time_budget_seconds", t.time_budget_seconds, 0.0, 1e7)
      .count("validate_every", t.validate_every, 0, 100000);
  return sec;
}

Section postprocess_section(InferConfig& c) {
  Section sec("postprocess");
  sec.real("threshold", c.threshold, 0.0, 1.0, true)
      .real("border_band", c.merge.band, 0.0, 1024.0)
      .real("radius", c.merge.radius, 0.0, 1024.0, true);
  return sec;
}

Section evaluate_section(eval::EvalConfig& c) {
  Section sec("evaluate");
  sec.real("distance_tolerance", c.distance_tolerance, 0.0, 1024.0, true)
      .count("max_detections", c.max_detections, 1, 100000);
  return sec;
}

Section render_section(RenderSettings& r) {
  Section sec("render");
  sec.count("factor", r.map.factor, 1, 64)
      .real("sigma", r.map.sigma, 0.0, 64.0, true)
      .real("truncation", r.map.truncation, 1.0, 16.0)
      .text("colormap", r.colormap, {"gray", "hot"})
      .real("gamma", r.gamma, 0.0, 10.0, true);
  return sec;
}

struct Sections {
  std::vector<std::pair<std::string, Section>> list;
  explicit Sections(PipelineConfig& c) {
    list.emplace_back("simulate", simulate_section(c.simulate));
    list.emplace_back("split", split_section(c.split, c.max_train_frames));
    list.emplace_back("detector", detector_section(c.detector));
    list.emplace_back("loss", loss_section(c.train.loss));
    list.emplace_back("train", train_section(c.train));
    list.emplace_back("postprocess", postprocess_section(c.infer));
    list.emplace_back("evaluate", evaluate_section(c.evaluate));
    list.emplace_back("render", render_section(c.render));
  }
};

}  // namespace

void validate(const PipelineConfig& config) {
  PipelineConfig c = config;
  if (c.threads < 1 || c.threads > 1024) throw ConfigError(fmt::format("threads = {} outside [1, 1024]", c.threads));
  for (const auto& [name, sec] : Sections(c).list) sec.check();
  const auto& d = c.simulate;
  if (d.density_min > d.density_max) throw ConfigError("simulate.density_min exceeds simulate.density_max");
  if (d.scene.radius_min > d.scene.radius_max) throw ConfigError("simulate.radius_min exceeds simulate.radius_max");
  if (d.scene.speed_min > d.scene.speed_max) throw ConfigError("simulate.speed_min exceeds simulate.speed_max");
  if (d.scene.width % 2 || d.scene.height % 2) throw ConfigError("simulate frame size must be even for the 2x2 patch split");
  if (c.train.augmentation.scale_min > c.train.augmentation.scale_max) {
    throw ConfigError("train.scale_min exceeds train.scale_max");
  }
  if (c.detector.input_height != d.scene.height / 2 || c.detector.input_width != d.scene.width / 2) {
    throw ConfigError(fmt::format("detector input {}x{} must be one patch ({}x{}) of the simulated frame",
                                  c.detector.input_height, c.detector.input_width, d.scene.height / 2, d.scene.width / 2));
  }
  c.detector.validate();
  c.render.map.validate();
}

PipelineConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  PipelineConfig c;
  Sections sections(c);
  for (const auto& [key, value] : j.items()) {
    if (key == "seed") {
      if (!is_count(value)) throw ConfigError("'seed' must be a non-negative integer");
      c.seed = value.get<std::uint64_t>();
      continue;
    }
    if (key == "threads") {
      if (!is_count(value)) throw ConfigError("'threads' must be a positive integer");
      c.threads = value.get<std::size_t>();
      continue;
    }
    auto it = std::find_if(sections.list.begin(), sections.list.end(), [&](const auto& s) { return s.first == key; });
    if (it == sections.list.end()) throw ConfigError(fmt::format("unknown configuration section '{}'", key));
    it->second.read(value);
  }
  validate(c);
  return c;
}

json config_to_json(const PipelineConfig& config) {
  PipelineConfig c = config;
  json out{{"seed", c.seed}, {"threads", c.threads}};
  for (const auto& [name, sec] : Sections(c).list) out[name] = sec.dump();
  return out;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  json j;
  try {
    j = io::read_json(path);
  } catch (const IoError& e) {
    throw ConfigError(fmt::format("cannot load configuration: {}", e.what()));
  }
  return config_from_json(j);
}

}  // namespace ulm::pipe
