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

#include "doctest.h"

#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ulm/errors.hpp"
#include "ulm/io/files.hpp"
#include "ulm/pipeline/commands.hpp"
#include "ulm/pipeline/config.hpp"
#include "ulm/simulator/sequence_io.hpp"

using namespace ulm;
using namespace ulm::pipe;
using nlohmann::json;

namespace {

PipelineConfig small_config() {
  PipelineConfig c;
  c.seed = 5;
  c.simulate.frames = 12;
  c.simulate.frames_per_clip = 4;
  c.split.test_size = 4;
  c.train.epochs = 2;
  c.train.lr_drop_epoch = 0;
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

std::vector<double> losses(const fs::path& log) {
  std::vector<double> out;
  std::istringstream in(io::read_text(log));
  for (std::string line; std::getline(in, line);) out.push_back(json::parse(line).at("loss").get<double>());
  return out;
}

}  // namespace

TEST_CASE("config json round trip and rejection") {
  const PipelineConfig d;
  CHECK_NOTHROW(validate(d));
  CHECK(config_to_json(config_from_json(config_to_json(d))) == config_to_json(d));

  json j = config_to_json(d);
  j["train"]["epochs"] = 3;
  j["render"]["colormap"] = "gray";
  const PipelineConfig c = config_from_json(j);
  CHECK(c.train.epochs == 3);
  CHECK(c.render.colormap == "gray");
  CHECK(config_from_json(json::object()).train.epochs == d.train.epochs);

  CHECK_THROWS_AS(config_from_json(json{{"trian", json::object()}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"train", {{"epoch", 3}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"train", {{"learning_rate", -1.0}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"train", {{"epochs", "three"}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"train", {{"epochs", -2}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"split", {{"threshold", 0.0}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"simulate", {{"width", 127}}}}), ConfigError);
  CHECK_THROWS_AS(config_from_json(json{{"render", {{"colormap", "jet"}}}}), ConfigError);
  CHECK_THROWS_AS(subset_from_string("validation"), ConfigError);
}

TEST_CASE("simulate is reproducible and echoes its config") {
  const PipelineConfig c = small_config();
  const fs::path a = fresh_dir("ulm_pipe_sim_a"), b = fresh_dir("ulm_pipe_sim_b");
  cmd_simulate(c, a);
  cmd_simulate(c, b);
  CHECK(io::read_bytes(a / "ground_truth.json") == io::read_bytes(b / "ground_truth.json"));
  const auto fa = sim::read_sequence(a), fb = sim::read_sequence(b);
  REQUIRE(fa.size() == 12);
  for (std::size_t i = 0; i < fa.size(); ++i) CHECK(fa[i].image == fb[i].image);
  REQUIRE(fs::exists(a / "config.simulate.json"));
  CHECK(config_to_json(load_config(a / "config.simulate.json")) == config_to_json(c));

  PipelineConfig other = c;
  other.seed = 6;
  const fs::path d = fresh_dir("ulm_pipe_sim_c");
  cmd_simulate(other, d);
  CHECK(io::read_bytes(a / "ground_truth.json") != io::read_bytes(d / "ground_truth.json"));
  fs::remove_all(a);
  fs::remove_all(b);
  fs::remove_all(d);
}

TEST_CASE("split subsets partition the frames") {
  const PipelineConfig c = small_config();
  const fs::path dir = fresh_dir("ulm_pipe_split");
  cmd_simulate(c, dir);
  const auto out = cmd_split(c, dir, dir / "split.json");
  CHECK(out.max_cross_correlation < c.split.threshold);
  const auto frames = sim::read_sequence(dir);
  const auto train = select_frames(frames, dir / "split.json", Subset::train);
  const auto test = select_frames(frames, dir / "split.json", Subset::test);
  CHECK(train.size() + test.size() == frames.size());
  std::set<std::int64_t> ids;
  for (const auto& f : train) ids.insert(f.index);
  for (const auto& f : test) ids.insert(f.index);
  CHECK(ids.size() == frames.size());
  CHECK(select_frames(frames, dir / "split.json", Subset::train, 3).size() == 3);
  CHECK(select_frames(frames, "", Subset::all).size() == frames.size());
  CHECK_THROWS(select_frames(frames, "", Subset::test));
  fs::remove_all(dir);
}

TEST_CASE("training, resume and downstream commands") {
  PipelineConfig c = small_config();
  const fs::path dir = fresh_dir("ulm_pipe_train");
  cmd_simulate(c, dir / "data");
  cmd_split(c, dir / "data", dir / "split.json");

  const auto full = cmd_train(c, dir / "data", dir / "split.json", dir / "full.ckpt", dir / "full.jsonl", false);
  CHECK(full.epochs_done == 2);
  CHECK_FALSE(full.budget_exhausted);
  REQUIRE(full.validation.has_value());

  PipelineConfig one = c;
  one.train.epochs = 1;
  cmd_train(one, dir / "data", dir / "split.json", dir / "part.ckpt", dir / "part.jsonl", false);
  const auto resumed = cmd_train(c, dir / "data", dir / "split.json", dir / "part.ckpt", dir / "part.jsonl", true);
  CHECK(resumed.epochs_done == 2);
  CHECK(losses(dir / "part.jsonl") == losses(dir / "full.jsonl"));
  CHECK(io::read_bytes(dir / "part.ckpt") == io::read_bytes(dir / "full.ckpt"));

  PipelineConfig reseeded = c;
  reseeded.seed = 99;
  CHECK_THROWS_AS(cmd_train(reseeded, dir / "data", dir / "split.json", dir / "part.ckpt", dir / "part.jsonl", true),
                  ConfigError);

  const auto dets = cmd_infer(c, dir / "full.ckpt", dir / "data", dir / "split.json", Subset::test, dir / "dets.jsonl");
  std::map<std::int64_t, std::size_t> per_frame;
  for (const auto& d : dets) {
    ++per_frame[d.frame];
    CHECK(d.score >= c.infer.threshold);
    CHECK(d.centroid.x >= 0.0);
    CHECK(d.centroid.x <= 128.0);
    CHECK(d.centroid.y >= 0.0);
    CHECK(d.centroid.y <= 128.0);
  }
  for (const auto& [frame, n] : per_frame) CHECK(n <= 4 * c.detector.queries);

  const auto report = cmd_evaluate(c, dir / "dets.jsonl", dir / "data", dir / "split.json", Subset::test, dir / "eval");
  CHECK(report.frames == 4);
  CHECK(report.detections == dets.size());
  const json rj = json::parse(io::read_text(dir / "eval" / "report.json"));
  for (const char* key : {"mAP", "mAR", "ap50", "localization_precision", "localization_recall"}) CHECK(rj.contains(key));
  CHECK(fs::exists(dir / "eval" / "report.txt"));
  CHECK(fs::exists(dir / "eval" / "config.evaluate.json"));

  const auto gt_map = cmd_render(c, "", dir / "data", dir / "split.json", Subset::test, dir / "render", "gt");
  std::size_t annotations = 0;
  for (const auto& f : select_frames(sim::read_sequence(dir / "data"), dir / "split.json", Subset::test)) {
    annotations += f.annotations.size();
  }
  CHECK(gt_map.mass() == doctest::Approx(static_cast<double>(annotations)).epsilon(1e-9));
  CHECK(fs::exists(dir / "render" / "gt.png"));
  CHECK(fs::exists(dir / "render" / "gt.f32"));
  fs::remove_all(dir);
}
