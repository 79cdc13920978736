/*
Copyright 2026 The segpaint Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS-IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/
#include <gtest/gtest.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"
#include "segpaint/config.hpp"
#include "segpaint/raster.hpp"

#ifndef SEGPAINT_CLI_PATH
#error "SEGPAINT_CLI_PATH must name the segpaint executable"
#endif

namespace segpaint {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Small enough to train in seconds.
const char* kTinyConfig = R"({
  "seed": 3,
  "dataset": {"scene": {"width": 64, "height": 64, "min_size": 12, "max_size": 24, "min_area": 30},
              "train_scenes": 3, "test_scenes": 2},
  "train": {"net": {"input_size": 32, "roi_grid": 4, "mask_size": 8, "paint_size": 16, "gen_depth": 2,
                    "disc_layers": 3, "backbone_width": 8, "gen_base_width": 8, "disc_base_width": 8},
            "phase1_steps": 4, "phase2_steps": 4, "batch_size": 2},
  "eval": {"grid_objects": 3, "grid_cell": 16}
})";

class Workdir {
 public:
  Workdir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("segpaint_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  ~Workdir() { fs::remove_all(dir_); }
  fs::path operator/(const std::string& s) const { return dir_ / s; }

 private:
  fs::path dir_;
};

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + SEGPAINT_CLI_PATH + "\" " + args + " >>\"" + log.string() + "\" 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

json read_json(const fs::path& p) { return json::parse(slurp(p)); }

void write_text(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

// --- configuration -------------------------------------------------------

TEST(Config, DefaultsRoundTrip) {
  const config::RunConfig c;
  EXPECT_EQ(json(c).get<config::RunConfig>(), c);
  EXPECT_EQ(c.resolved_train().net.input_size, 128);
  EXPECT_EQ(c.resolved_train().net.mask_size, 32);
  EXPECT_EQ(c.resolved_train().net.paint_size, 64);
  EXPECT_EQ(c.resolved_train().batch_size, 8);
}

TEST(Config, PartialFileKeepsDefaults) {
  const auto c = config::from_json_checked(json::parse(R"({"train": {"batch_size": 4}, "seed": 9})"));
  EXPECT_EQ(c.train.batch_size, 4);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.train.net, net::NetConfig{});
  EXPECT_EQ(c.resolved_train().seed, 9u);
}

TEST(Config, SchemaViolationsAreReported) {
  EXPECT_THROW(config::from_json_checked(json::parse(R"({"bogus": 1})")), ConfigError);
  EXPECT_THROW(config::from_json_checked(json::parse(R"({"train": {"net": {"mask_sz": 8}}})")), ConfigError);
  EXPECT_THROW(config::from_json_checked(json::parse(R"({"train": {"batch_size": "eight"}})")), ConfigError);
  EXPECT_THROW(config::from_json_checked(json::parse(R"({"eval": {"split": "valid"}})")), ConfigError);
  EXPECT_THROW(config::from_json_checked(json::parse(R"({"train": {"net": {"paint_size": 18}}})")), ConfigError);
  try {
    config::from_json_checked(json::parse(R"({"train": {"net": {"mask_sz": 8}}})"));
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.net.mask_sz"), std::string::npos) << e.what();
  }
}

TEST(Config, OverridesApplyDottedPaths) {
  json j = config::RunConfig{};
  config::apply_override(j, "train.net.mask_size=16");
  config::apply_override(j, "eval.split=train");
  config::apply_override(j, "train.gen_steps_typo=1");
  EXPECT_EQ(j["train"]["net"]["mask_size"], 16);
  EXPECT_EQ(j["eval"]["split"], "train");
  EXPECT_THROW(config::from_json_checked(j), ConfigError);
  EXPECT_THROW(config::apply_override(j, "no_equals_sign"), ConfigError);
}

// --- command line --------------------------------------------------------

TEST(Cli, SmokeChain) {
  Workdir w;
  const auto log = w / "log.txt";
  write_text(w / "cfg.json", kTinyConfig);
  const std::string cfg = "--config " + q(w / "cfg.json");
  ASSERT_EQ(run("gen-data " + cfg + " --out " + q(w / "data"), log), 0) << slurp(log);
  ASSERT_EQ(run("train " + cfg + " --data " + q(w / "data") + " --out " + q(w / "run"), log), 0) << slurp(log);
  const std::string ck = " --checkpoint " + q(w / "run/checkpoint.bin") + " --data " + q(w / "data/manifest.json");
  ASSERT_EQ(run("eval-seg " + cfg + ck + " --out " + q(w / "ev"), log), 0) << slurp(log);
  ASSERT_EQ(run("eval-paint " + cfg + ck + " --out " + q(w / "ev"), log), 0) << slurp(log);
  ASSERT_EQ(run("depth-order " + cfg + ck + " --out " + q(w / "ev"), log), 0) << slurp(log);

  std::ifstream metrics(w / "run/metrics.jsonl");
  int lines = 0;
  for (std::string line; std::getline(metrics, line); ++lines) {
    const auto r = json::parse(line);
    EXPECT_EQ(r["step"], lines + 1);
    EXPECT_EQ(r["phase"], lines < 4 ? 1 : 2);
    EXPECT_TRUE(std::isfinite(r["total"].get<double>()));
  }
  EXPECT_EQ(lines, 8);

  const auto seg = read_json(w / "ev/seg_report.json");
  for (const char* k : {"iou_union", "iou_visible", "iou_invisible"}) {
    EXPECT_GE(seg["summary"][k].get<double>(), 0.0);
    EXPECT_LE(seg["summary"][k].get<double>(), 1.0);
  }
  EXPECT_EQ(seg["copy_baseline"]["iou_invisible"], 0.0);
  EXPECT_EQ(seg["objects"].size(), seg["summary"]["objects"].get<std::size_t>());
  EXPECT_GT(seg["objects"].size(), 0u);
  const auto paint = read_json(w / "ev/paint_report.json");
  EXPECT_GE(paint["summary"]["l1"].get<double>(), paint["summary"]["l2"].get<double>());
  EXPECT_GT(paint["nn_baseline"]["reference_objects"].get<int>(), 0);
  const auto depth = read_json(w / "ev/depth_report.json");
  EXPECT_GE(depth["accuracy"].get<double>(), 0.0);
  EXPECT_LE(depth["accuracy"].get<double>(), 1.0);
  EXPECT_EQ(read_json(w / "ev/depth_graphs.json").size(), depth["images"].get<std::size_t>());
  EXPECT_TRUE(fs::exists(w / "ev/seg_grid.png"));
  EXPECT_TRUE(fs::exists(w / "ev/paint_grid.png"));
  EXPECT_EQ(read_json(w / "ev/run_config.json")["seed"], 3);

  // Infer on a training object.
  const auto manifest = read_json(w / "data/manifest.json");
  const auto& s0 = manifest["samples"][0];
  const auto& scene0 = manifest["scenes"][s0["scene"].get<int>()];
  ASSERT_EQ(run("infer " + cfg + " --checkpoint " + q(w / "run/checkpoint.bin") + " --image " +
                    q(w / "data" / scene0["image"].get<std::string>()) + " --sv " +
                    q(w / "data" / s0["sv"].get<std::string>()) + " --out " + q(w / "inf"),
                log),
            0)
      << slurp(log);
  for (const char* f : {"pred_sf.png", "patch.png", "painted.png"}) EXPECT_TRUE(fs::exists(w / "inf" / f)) << f;
}

TEST(Cli, OracleSegmentationAndDepthArePerfect) {
  Workdir w;
  const auto log = w / "log.txt";
  write_text(w / "cfg.json", kTinyConfig);
  const std::string cfg = "--config " + q(w / "cfg.json");
  ASSERT_EQ(run("gen-data " + cfg + " --out " + q(w / "data"), log), 0) << slurp(log);
  ASSERT_EQ(run("eval-seg --oracle " + cfg + " --data " + q(w / "data") + " --out " + q(w / "ev"), log), 0)
      << slurp(log);
  ASSERT_EQ(run("depth-order --oracle " + cfg + " --data " + q(w / "data") + " --out " + q(w / "ev"), log), 0)
      << slurp(log);
  const auto seg = read_json(w / "ev/seg_report.json");
  EXPECT_EQ(seg["summary"]["iou_union"], 1.0);
  EXPECT_EQ(seg["summary"]["iou_visible"], 1.0);
  EXPECT_EQ(seg["summary"]["iou_invisible"], 1.0);
  EXPECT_EQ(read_json(w / "ev/depth_report.json")["accuracy"], 1.0);
}

TEST(Cli, RerunsAreByteIdentical) {
  Workdir w;
  const auto log = w / "log.txt";
  write_text(w / "cfg.json", kTinyConfig);
  const std::string cfg = "--config " + q(w / "cfg.json");
  for (const char* d : {"a", "b"}) {
    const fs::path root = w / d;
    ASSERT_EQ(run("gen-data " + cfg + " --out " + q(root / "data"), log), 0) << slurp(log);
    ASSERT_EQ(run("train " + cfg + " --data " + q(root / "data") + " --out " + q(root / "run"), log), 0) << slurp(log);
    ASSERT_EQ(run("eval-seg " + cfg + " --checkpoint " + q(root / "run/checkpoint.bin") + " --data " +
                      q(root / "data") + " --out " + q(root / "ev"),
                  log),
              0)
        << slurp(log);
  }
  for (const auto& e : fs::recursive_directory_iterator(w / "a/data")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), w / "a");
    EXPECT_EQ(slurp(e.path()), slurp(w / "b" / rel)) << rel;
  }
  EXPECT_EQ(slurp(w / "a/run/checkpoint.bin"), slurp(w / "b/run/checkpoint.bin"));
  EXPECT_EQ(slurp(w / "a/ev/seg_report.json"), slurp(w / "b/ev/seg_report.json"));
  EXPECT_EQ(slurp(w / "a/ev/seg_grid.png"), slurp(w / "b/ev/seg_grid.png"));
}

TEST(Cli, ResumeChecksTheConfiguration) {
  Workdir w;
  const auto log = w / "log.txt";
  write_text(w / "cfg.json", kTinyConfig);
  const std::string cfg = "--config " + q(w / "cfg.json");
  ASSERT_EQ(run("gen-data " + cfg + " --out " + q(w / "data"), log), 0) << slurp(log);
  const std::string data = " --data " + q(w / "data");
  ASSERT_EQ(run("train " + cfg + data + " --out " + q(w / "full"), log), 0) << slurp(log);
  // Resuming a finished run is a no-op on the weights.
  ASSERT_EQ(run("train " + cfg + data + " --resume " + q(w / "full/checkpoint.bin") + " --out " + q(w / "again"), log), 0)
      << slurp(log);
  EXPECT_EQ(slurp(w / "full/checkpoint.bin"), slurp(w / "again/checkpoint.bin"));
  // A different schedule changes the configuration hash.
  EXPECT_EQ(run("train " + cfg + data + " --set train.phase2_steps=9 --resume " + q(w / "full/checkpoint.bin") +
                    " --out " + q(w / "cont"),
                log),
            2);
}

TEST(Cli, NoClobberAndExitCodes) {
  Workdir w;
  const auto log = w / "log.txt";
  write_text(w / "cfg.json", kTinyConfig);
  write_text(w / "bad.json", R"({"bogus": 1})");
  const std::string cfg = "--config " + q(w / "cfg.json");
  ASSERT_EQ(run("gen-data " + cfg + " --out " + q(w / "data"), log), 0);
  EXPECT_EQ(run("gen-data " + cfg + " --out " + q(w / "data"), log), 0);
  EXPECT_EQ(run("gen-data --no-clobber " + cfg + " --out " + q(w / "data"), log), 3);
  EXPECT_EQ(run("gen-data --config " + q(w / "bad.json") + " --out " + q(w / "x"), log), 2);
  EXPECT_EQ(run("gen-data --config " + q(w / "missing.json") + " --out " + q(w / "x"), log), 3);
  EXPECT_EQ(run("eval-seg " + cfg + " --data " + q(w / "data") + " --out " + q(w / "x"), log), 2);  // no checkpoint
  write_text(w / "junk.bin", "not a checkpoint");
  EXPECT_EQ(run("eval-seg " + cfg + " --checkpoint " + q(w / "junk.bin") + " --data " + q(w / "data") + " --out " +
                    q(w / "x"),
                log),
            3);
  EXPECT_NE(run("no-such-command", log), 0);
}

TEST(Cli, EnvironmentSuppliesDefaultsFlagsWin) {
  Workdir w;
  const auto log = w / "log.txt";
  write_text(w / "cfg.json", kTinyConfig);
  ASSERT_EQ(::setenv("SEGPAINT_CONFIG", (w / "cfg.json").c_str(), 1), 0);
  ASSERT_EQ(::setenv("SEGPAINT_SEED", "41", 1), 0);
  ASSERT_EQ(run("gen-data --out " + q(w / "d1"), log), 0) << slurp(log);
  ASSERT_EQ(run("gen-data --seed 5 --out " + q(w / "d2"), log), 0) << slurp(log);
  ::unsetenv("SEGPAINT_CONFIG");
  ::unsetenv("SEGPAINT_SEED");
  const auto c1 = read_json(w / "d1/run_config.json");
  EXPECT_EQ(c1["seed"], 41);
  EXPECT_EQ(c1["dataset"]["train_scenes"], 3);
  EXPECT_EQ(read_json(w / "d2/run_config.json")["seed"], 5);
}

TEST(Cli, InferKeepsVisiblePixels) {
  Workdir w;
  const auto log = w / "log.txt";
  write_text(w / "cfg.json", kTinyConfig);
  const std::string cfg = "--config " + q(w / "cfg.json");
  ASSERT_EQ(run("gen-data " + cfg + " --out " + q(w / "data"), log), 0) << slurp(log);
  ASSERT_EQ(run("train " + cfg + " --data " + q(w / "data") + " --out " + q(w / "run"), log), 0) << slurp(log);
  const auto manifest = read_json(w / "data/manifest.json");
  int tested = 0;
  for (const auto& s : manifest["samples"]) {
    if (!s["occluders"].empty() || tested == 2) continue;
    const fs::path image = w / "data" / manifest["scenes"][s["scene"].get<int>()]["image"].get<std::string>();
    const fs::path sv = w / "data" / s["sv"].get<std::string>();
    const fs::path out = w / ("inf" + std::to_string(tested++));
    ASSERT_EQ(run("infer " + cfg + " --checkpoint " + q(w / "run/checkpoint.bin") + " --image " + q(image) + " --sv " +
                      q(sv) + " --out " + q(out),
                  log),
              0)
        << slurp(log);
    const auto in = raster::read_image(image), painted = raster::read_image(out / "painted.png");
    const auto mask = raster::read_mask(sv);
    for (int c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask.values()[i] >= 0.5f) ASSERT_EQ(painted.channel(c)[i], in.channel(c)[i]);
    EXPECT_EQ(raster::read_image(out / "patch.png").width(), 16);
  }
  EXPECT_EQ(tested, 2);
}

}  // namespace
}  // namespace segpaint
