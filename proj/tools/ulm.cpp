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

// Command-line entry point: simulate, split, train, infer, evaluate, render.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdlib>
#include <optional>
#include <string>

#include "ulm/errors.hpp"
#include "ulm/log.hpp"
#include "ulm/pipeline/commands.hpp"

namespace {

using namespace ulm;
namespace fs = std::filesystem;

enum ExitCode { kOk = 0, kUsage = 1, kRuntime = 2 };

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::size_t> frames;
  std::optional<std::size_t> test_size;
  std::optional<double> split_threshold;
  std::optional<std::size_t> epochs;
  std::optional<double> time_budget;
  std::optional<double> learning_rate;
  std::optional<double> det_threshold;
  std::optional<double> tolerance;
  std::optional<std::size_t> factor;
  std::optional<double> sigma;
  std::optional<std::string> colormap;
  std::optional<double> gamma;
};

pipe::PipelineConfig resolve(const std::string& config_path, const Overrides& o) {
  pipe::PipelineConfig c;
  std::string path = config_path;
  if (path.empty()) {
    if (const char* env = std::getenv("ULM_CONFIG"); env && *env) path = env;
  }
  if (!path.empty()) c = pipe::load_config(path);
  if (o.seed) c.seed = *o.seed;
  if (o.threads) c.threads = *o.threads;
  if (o.frames) c.simulate.frames = *o.frames;
  if (o.test_size) c.split.test_size = *o.test_size;
  if (o.split_threshold) c.split.threshold = *o.split_threshold;
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.time_budget) c.train.time_budget_seconds = *o.time_budget;
  if (o.learning_rate) c.train.learning_rate = *o.learning_rate;
  if (o.det_threshold) c.infer.threshold = *o.det_threshold;
  if (o.tolerance) c.evaluate.distance_tolerance = *o.tolerance;
  if (o.factor) c.render.map.factor = *o.factor;
  if (o.sigma) c.render.map.sigma = *o.sigma;
  if (o.colormap) c.render.colormap = *o.colormap;
  if (o.gamma) c.render.gamma = *o.gamma;
  pipe::validate(c);
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Microbubble localization pipeline"};
  app.require_subcommand(1);
  app.fallthrough();  // global options may follow the subcommand
  std::string config_path;
  bool quiet = false;
  Overrides o;
  app.add_option("-c,--config", config_path, "JSON configuration (default: $ULM_CONFIG)");
  app.add_option("--seed", o.seed, "Master seed");
  app.add_option("--threads", o.threads, "Worker thread cap");
  app.add_flag("-q,--quiet", quiet, "Only report warnings and errors");

  std::string data_dir, manifest, checkpoint, out, log_path, detections, subset_name = "all", name;
  bool resume = false;

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset with ground truth");
  sim->add_option("-o,--out", out, "Output directory")->required();
  sim->add_option("--frames", o.frames, "Frame count");

  auto* split = app.add_subcommand("split", "Correlation-aware train/test split");
  split->add_option("-d,--data", data_dir, "Dataset directory")->required();
  split->add_option("-m,--manifest", manifest, "Manifest output (default: <data>/split.json)");
  split->add_option("--test-size", o.test_size, "Requested test frames");
  split->add_option("--threshold", o.split_threshold, "Maximum test/train correlation");

  auto* train = app.add_subcommand("train", "Train the detector");
  train->add_option("-d,--data", data_dir, "Dataset directory")->required();
  train->add_option("-m,--manifest", manifest, "Split manifest")->required();
  train->add_option("-o,--checkpoint", checkpoint, "Checkpoint output")->required();
  train->add_option("--log", log_path, "JSON-lines epoch log (default: next to the checkpoint)");
  train->add_option("--epochs", o.epochs, "Epoch count");
  train->add_option("--lr", o.learning_rate, "Learning rate");
  train->add_option("--time-budget", o.time_budget, "Wall-clock budget in seconds (0: none)");
  train->add_flag("--resume", resume, "Continue from an existing checkpoint");

  auto* infer = app.add_subcommand("infer", "Detect microbubbles in frames");
  infer->add_option("-k,--checkpoint", checkpoint, "Checkpoint")->required();
  infer->add_option("-d,--data", data_dir, "Dataset directory")->required();
  infer->add_option("-m,--manifest", manifest, "Split manifest");
  infer->add_option("--subset", subset_name, "all, train or test");
  infer->add_option("-o,--out", out, "Detections (JSON lines)")->required();
  infer->add_option("--threshold", o.det_threshold, "Confidence threshold");

  auto* evaluate = app.add_subcommand("evaluate", "Score detections against ground truth");
  evaluate->add_option("-i,--detections", detections, "Detections (JSON lines)")->required();
  evaluate->add_option("-d,--data", data_dir, "Dataset directory")->required();
  evaluate->add_option("-m,--manifest", manifest, "Split manifest");
  evaluate->add_option("--subset", subset_name, "all, train or test");
  evaluate->add_option("-o,--out", out, "Report directory")->required();
  evaluate->add_option("--tolerance", o.tolerance, "Centroid distance tolerance in pixels");

  auto* render = app.add_subcommand("render", "Super-resolution map from detections or ground truth");
  render->add_option("-i,--detections", detections, "Detections (JSON lines); ground truth when omitted");
  render->add_option("-d,--data", data_dir, "Dataset directory")->required();
  render->add_option("-m,--manifest", manifest, "Split manifest");
  render->add_option("--subset", subset_name, "all, train or test");
  render->add_option("-o,--out", out, "Output directory")->required();
  render->add_option("--name", name, "Output file stem (default: sr_detections or sr_ground_truth)");
  render->add_option("--factor", o.factor, "Upsampling factor");
  render->add_option("--sigma", o.sigma, "Gaussian width in SR pixels");
  render->add_option("--colormap", o.colormap, "gray or hot");
  render->add_option("--gamma", o.gamma, "Gamma compression exponent");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }
  if (quiet) log::set_threshold(log::Level::warn);

  try {
    const pipe::PipelineConfig config = resolve(config_path, o);
    const pipe::Subset subset = pipe::subset_from_string(subset_name);
    if (*sim) {
      pipe::cmd_simulate(config, out);
    } else if (*split) {
      const fs::path m = manifest.empty() ? fs::path(data_dir) / "split.json" : fs::path(manifest);
      const auto r = pipe::cmd_split(config, data_dir, m);
      if (r.manifest.shortfall > 0) {
        log::warn("split: shortfall of {} test frames", r.manifest.shortfall);
      }
      fmt::print("{}\n", m.string());
    } else if (*train) {
      const fs::path ck(checkpoint);
      const fs::path lp = log_path.empty() ? fs::path(ck).replace_extension(".log.jsonl") : fs::path(log_path);
      const auto r = pipe::cmd_train(config, data_dir, manifest, ck, lp, resume);
      fmt::print("epochs {} loss {:.6f}{}\n", r.epochs_done, r.last_loss,
                 r.validation ? fmt::format(" val_ap50 {:.4f} val_mAP {:.4f}", r.validation->ap50, r.validation->map)
                              : "");
    } else if (*infer) {
      pipe::cmd_infer(config, checkpoint, data_dir, manifest, subset, out);
    } else if (*evaluate) {
      const auto r = pipe::cmd_evaluate(config, detections, data_dir, manifest, subset, out);
      fmt::print("{}", eval::report_table(r));
    } else if (*render) {
      if (name.empty()) name = detections.empty() ? "sr_ground_truth" : "sr_detections";
      pipe::cmd_render(config, detections, data_dir, manifest, subset, out, name);
    }
  } catch (const ConfigError& e) {
    log::error("{}", e.what());
    return kUsage;
  } catch (const std::exception& e) {
    log::error("{}", e.what());
    return kRuntime;
  }
  return kOk;
}
