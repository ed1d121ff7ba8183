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

#include "ulm/pipeline/commands.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <limits>
#include <sstream>
#include <unordered_map>

#include "ulm/dataset/coco.hpp"
#include "ulm/detector/checkpoint.hpp"
#include "ulm/errors.hpp"
#include "ulm/io/files.hpp"
#include "ulm/log.hpp"
#include "ulm/pipeline/infer.hpp"
#include "ulm/pipeline/train.hpp"
#include "ulm/simulator/sequence_io.hpp"

namespace ulm::pipe {

using nlohmann::json;

namespace {

void echo_config(const PipelineConfig& config, const fs::path& dir, const std::string& command) {
  io::write_json(dir / fmt::format("config.{}.json", command), config_to_json(config));
}

fs::path parent_or_dot(const fs::path& p) { return p.has_parent_path() ? p.parent_path() : fs::path("."); }

// Stream ids for the seed; fixed so that commands never share draws.
enum Stream : std::uint64_t { kSimulate = 1, kSplit = 2, kDetectorInit = 3, kTraining = 4 };

std::uint64_t stream_seed(std::uint64_t seed, Stream s) {
  Rng r = Rng(seed).split(s);
  return static_cast<std::uint64_t>(r.integer(0, std::numeric_limits<std::int64_t>::max()));
}

}  // namespace

Subset subset_from_string(const std::string& name) {
  if (name == "all") return Subset::all;
  if (name == "train") return Subset::train;
  if (name == "test") return Subset::test;
  throw ConfigError(fmt::format("unknown frame subset '{}' (expected all, train or test)", name));
}

std::vector<sim::Frame> select_frames(std::vector<sim::Frame> frames, const fs::path& manifest_path, Subset subset,
                                      std::size_t max_frames) {
  std::vector<sim::Frame> out;
  if (subset == Subset::all) {
    out = std::move(frames);
  } else {
    if (manifest_path.empty()) throw ConfigError("a split manifest is required to select train or test frames");
    const data::SplitManifest m = data::read_manifest(manifest_path);
    std::unordered_map<std::int64_t, std::size_t> pos;
    for (std::size_t i = 0; i < frames.size(); ++i) pos.emplace(frames[i].index, i);
    for (std::int64_t id : subset == Subset::train ? m.train_ids : m.test_ids) {
      auto it = pos.find(id);
      if (it == pos.end()) throw ConfigError(fmt::format("manifest frame {} is not in the dataset", id));
      out.push_back(std::move(frames[it->second]));
    }
  }
  if (max_frames > 0 && out.size() > max_frames) out.resize(max_frames);
  return out;
}

void cmd_simulate(const PipelineConfig& config, const fs::path& out) {
  validate(config);
  Rng rng(stream_seed(config.seed, kSimulate));
  const auto frames = sim::simulate_dataset(config.simulate, rng);
  sim::write_sequence(out, frames, false);
  data::export_coco(frames, out / "coco.json");
  data::validate_coco(data::import_coco(out / "coco.json"));
  echo_config(config, out, "simulate");
  std::size_t bubbles = 0;
  for (const auto& f : frames) bubbles += f.annotations.size();
  log::info("simulate: {} frames, {} annotated bubbles written to {}", frames.size(), bubbles, out.string());
}

double verify_split(const std::vector<sim::Frame>& frames, const data::SplitManifest& manifest) {
  std::unordered_map<std::int64_t, const sim::Frame*> by_id;
  for (const auto& f : frames) by_id.emplace(f.index, &f);
  double worst = -1.0;
  for (std::int64_t t : manifest.test_ids) {
    for (std::int64_t r : manifest.train_ids) {
      worst = std::max(worst, data::frame_correlation(*by_id.at(t), *by_id.at(r)).value);
    }
  }
  return worst;
}

SplitOutcome cmd_split(const PipelineConfig& config, const fs::path& data_dir, const fs::path& manifest_path) {
  validate(config);
  const auto frames = sim::read_sequence(data_dir);
  Rng rng(stream_seed(config.seed, kSplit));
  SplitOutcome out;
  out.manifest = data::split_by_correlation(frames, config.split.test_size, config.split.threshold, rng, config.threads);
  out.max_cross_correlation = verify_split(frames, out.manifest);
  if (!out.manifest.test_ids.empty() && !(out.max_cross_correlation < config.split.threshold)) {
    throw NumericError(fmt::format("split verification failed: test/train correlation {} reaches threshold {}",
                                   out.max_cross_correlation, config.split.threshold));
  }
  data::write_manifest(manifest_path, out.manifest);
  echo_config(config, parent_or_dot(manifest_path), "split");
  log::info("split: {} test / {} train frames, max cross-correlation {:.4f} (threshold {})",
            out.manifest.test_ids.size(), out.manifest.train_ids.size(), out.max_cross_correlation,
            config.split.threshold);
  return out;
}

TrainOutcome cmd_train(const PipelineConfig& config, const fs::path& data_dir, const fs::path& manifest_path,
                       const fs::path& checkpoint_path, const fs::path& log_path, bool resume) {
  validate(config);
  const auto start = std::chrono::steady_clock::now();
  auto frames = sim::read_sequence(data_dir);
  const auto train_frames = select_frames(frames, manifest_path, Subset::train, config.max_train_frames);
  const auto test_frames = select_frames(std::move(frames), manifest_path, Subset::test);
  if (train_frames.empty()) throw ConfigError("train: the manifest lists no training frames");
  const auto patches = patches_of(train_frames);
  for (const auto& p : patches) {
    if (p.height() != config.detector.input_height || p.width() != config.detector.input_width) {
      throw ConfigError(fmt::format("train: patches are {}x{} but the detector expects {}x{}", p.height(), p.width(),
                                    config.detector.input_height, config.detector.input_width));
    }
  }

  det::Detector detector(config.detector, stream_seed(config.seed, kDetectorInit));
  Trainer trainer(detector, config.train, stream_seed(config.seed, kTraining));
  std::vector<std::string> log_lines;
  if (resume && fs::exists(checkpoint_path)) {
    trainer.resume(det::read_checkpoint(checkpoint_path));
    if (fs::exists(log_path)) {
      std::istringstream in(io::read_text(log_path));
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (json::parse(line).at("epoch").get<std::size_t>() <= trainer.epochs_done()) log_lines.push_back(line);
      }
    }
    log::info("train: resuming after epoch {}", trainer.epochs_done());
  }
  echo_config(config, parent_or_dot(checkpoint_path), "train");

  auto save = [&] {
    det::Checkpoint ck = trainer.checkpoint();
    ck.metadata["pipeline"] = config_to_json(config);
    ck.metadata["pipeline"].erase("threads");  // keeps checkpoints independent of the thread count
    det::write_checkpoint(checkpoint_path, ck);
    std::string text;
    for (const auto& l : log_lines) text += l + "\n";
    io::write_atomic(log_path, text);
  };

  TrainOutcome outcome;
  const auto truth = truth_of(test_frames);
  double last_epoch_seconds = 0.0;
  while (trainer.epochs_done() < config.train.epochs) {
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (config.train.time_budget_seconds > 0.0 && elapsed + last_epoch_seconds > config.train.time_budget_seconds) {
      outcome.budget_exhausted = true;
      log::warn("train: stopping after {} epochs, the next one would exceed the {} s budget", trainer.epochs_done(),
                config.train.time_budget_seconds);
      break;
    }
    const EpochStats st = trainer.run_epoch(patches, config.threads);
    json line{{"epoch", st.epoch},         {"loss", st.loss},   {"grad_norm", st.grad_norm},
              {"learning_rate", st.learning_rate}, {"steps", st.steps}, {"seconds", st.seconds}};
    const std::size_t every = config.train.validate_every;
    const bool last = st.epoch == config.train.epochs;
    if (every > 0 && !truth.empty() && (st.epoch % every == 0 || last)) {
      const auto dets = infer_frames(detector, test_frames, config.infer, config.threads);
      const eval::EvalReport r = eval::evaluate(dets, truth, config.evaluate);
      line["val_mAP"] = r.map;
      line["val_mAR"] = r.mar;
      line["val_ap50"] = r.ap50;
      line["val_localization_precision"] = r.localization_precision;
      line["val_localization_recall"] = r.localization_recall;
      outcome.validation = r;
    }
    log_lines.push_back(line.dump());
    save();
    outcome.last_loss = st.loss;
    last_epoch_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() - elapsed;
    log::info("train: epoch {}/{} loss {:.4f} ({:.1f} s){}", st.epoch, config.train.epochs, st.loss, st.seconds,
              line.contains("val_ap50") ? fmt::format(" val ap50 {:.3f}", line["val_ap50"].get<double>()) : "");
  }
  if (trainer.epochs_done() == 0 || !fs::exists(checkpoint_path)) save();
  outcome.epochs_done = trainer.epochs_done();
  return outcome;
}

std::vector<post::Detection> cmd_infer(const PipelineConfig& config, const fs::path& checkpoint_path,
                                       const fs::path& data_dir, const fs::path& manifest_path, Subset subset,
                                       const fs::path& out) {
  validate(config);
  const auto detector = det::load_detector(det::read_checkpoint(checkpoint_path));
  const auto frames = select_frames(sim::read_sequence(data_dir), manifest_path, subset);
  for (const auto& f : frames) {
    if (f.height() != 2 * detector->config().input_height || f.width() != 2 * detector->config().input_width) {
      throw ConfigError(fmt::format("infer: frame {} is {}x{}, the checkpoint expects {}x{}", f.index, f.height(),
                                    f.width(), 2 * detector->config().input_height, 2 * detector->config().input_width));
    }
  }
  const auto dets = infer_frames(*detector, frames, config.infer, config.threads);
  post::write_detections(out, dets);
  echo_config(config, parent_or_dot(out), "infer");
  log::info("infer: {} detections in {} frames", dets.size(), frames.size());
  return dets;
}

eval::EvalReport cmd_evaluate(const PipelineConfig& config, const fs::path& detections_path, const fs::path& data_dir,
                              const fs::path& manifest_path, Subset subset, const fs::path& out_dir) {
  validate(config);
  const auto dets = post::read_detections(detections_path);
  const auto frames = select_frames(sim::read_ground_truth(data_dir), manifest_path, subset);
  const eval::EvalReport r = eval::evaluate(dets, truth_of(frames), config.evaluate);
  io::write_json(out_dir / "report.json", eval::report_to_json(r));
  io::write_atomic(out_dir / "report.txt", eval::report_table(r));
  echo_config(config, out_dir, "evaluate");
  return r;
}

render::SrMap cmd_render(const PipelineConfig& config, const fs::path& detections_path, const fs::path& data_dir,
                         const fs::path& manifest_path, Subset subset, const fs::path& out_dir,
                         const std::string& name) {
  validate(config);
  const auto frames = select_frames(sim::read_ground_truth(data_dir), manifest_path, subset);
  if (frames.empty()) throw ConfigError("render: no frames selected");
  std::vector<std::vector<Point>> points(frames.size());
  std::unordered_map<std::int64_t, std::size_t> pos;
  for (std::size_t i = 0; i < frames.size(); ++i) pos.emplace(frames[i].index, i);
  if (detections_path.empty()) {
    for (std::size_t i = 0; i < frames.size(); ++i) {
      for (const auto& a : frames[i].annotations) points[i].push_back(a.centroid);
    }
  } else {
    for (const auto& d : post::read_detections(detections_path)) {
      auto it = pos.find(d.frame);
      if (it == pos.end()) throw ConfigError(fmt::format("render: detection for frame {} outside the selection", d.frame));
      points[it->second].push_back(d.centroid);
    }
  }
  const render::SrMap map = render::render_sequence(points, frames[0].height(), frames[0].width(), config.render.map,
                                                    config.threads);
  render::export_image(map, out_dir / (name + ".png"), render::colormap_from_string(config.render.colormap),
                       config.render.gamma);
  render::export_raw(map, out_dir / (name + ".f32"));
  echo_config(config, out_dir, "render");
  log::info("render: {} points from {} frames, mass {:.6f}", map.points, map.frames, map.mass());
  return map;
}

}  // namespace ulm::pipe
