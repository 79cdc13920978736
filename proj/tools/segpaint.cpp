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

// segpaint command-line driver.
//
//   segpaint gen-data    --config cfg.json --out data/
//   segpaint train       --config cfg.json --data data/manifest.json --out run/
//   segpaint eval-seg    --checkpoint run/checkpoint.bin --data data/manifest.json --out eval/
//   segpaint eval-paint  --checkpoint run/checkpoint.bin --data data/manifest.json --out eval/
//   segpaint depth-order --checkpoint run/checkpoint.bin --data data/manifest.json --out eval/
//   segpaint infer       --checkpoint run/checkpoint.bin --image img.png --sv sv.png --out pred/
//
// Global flags may also come from SEGPAINT_* environment variables.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "segpaint/config.hpp"
#include "segpaint/evalsuite.hpp"
#include "segpaint/pipeline.hpp"
#include "segpaint/raster.hpp"
#include "segpaint/trainer.hpp"

namespace fs = std::filesystem;
using namespace segpaint;
using nlohmann::json;

namespace {

struct Globals {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string device;
  std::optional<double> threshold;
  bool oracle = false;
  bool no_clobber = false;
  std::vector<std::string> sets;
};

struct Inputs {
  std::string data, checkpoint, resume, image, sv, split;
};

class OutDir {
 public:
  OutDir(const std::string& dir, bool no_clobber) : dir_(dir), no_clobber_(no_clobber) {
    if (dir.empty()) throw ConfigError("--out is required");
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec || !fs::is_directory(dir_)) throw IoError("cannot create output directory " + dir_.string());
  }
  fs::path operator()(const std::string& name) const {
    const fs::path p = dir_ / name;
    if (no_clobber_ && fs::exists(p)) throw IoError("refusing to overwrite " + p.string() + " (--no-clobber)");
    return p;
  }
  const fs::path& dir() const { return dir_; }

 private:
  fs::path dir_;
  bool no_clobber_;
};

void write_json(const fs::path& p, const json& j) {
  std::ofstream os(p, std::ios::trunc);
  if (!os) throw IoError("cannot write " + p.string());
  os << j.dump(2) << '\n';
}

config::RunConfig resolve(const Globals& g) {
  config::RunConfig c = config::load(g.config, g.sets);
  if (g.seed) c.seed = *g.seed;
  if (!g.device.empty()) c.device = g.device;
  if (g.threshold) c.threshold = *g.threshold;
  c.validate();
  return c;
}

pipeline::Settings settings(const config::RunConfig& c) { return {c.eval.expansion, c.threshold, c.eval.depth_threshold}; }

scene::DatasetManifest manifest(const Inputs& in) {
  if (in.data.empty()) throw ConfigError("--data (dataset manifest) is required");
  fs::path p = in.data;
  if (fs::is_directory(p)) p /= "manifest.json";
  return scene::load_manifest(p);
}

// Checkpoint, checked against the network section of an explicit config.
train::Checkpoint checkpoint(const Inputs& in, const Globals& g, const config::RunConfig& c) {
  if (in.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  auto ck = train::load_checkpoint(in.checkpoint);
  if (!g.config.empty() && !(ck.config.net == c.train.net))
    throw ConfigError("checkpoint/config mismatch: network settings in " + g.config + " differ from " + in.checkpoint);
  return ck;
}

std::string split_of(const Inputs& in, const config::RunConfig& c) { return in.split.empty() ? c.eval.split : in.split; }

void save_run_config(const OutDir& out, const config::RunConfig& c) { config::save(c, out("run_config.json")); }

int cmd_gen_data(const Globals& g) {
  const auto c = resolve(g);
  OutDir out(g.out, g.no_clobber);
  out("manifest.json");
  const auto m = scene::build_dataset(c.dataset, out.dir());
  save_run_config(out, c);
  std::cout << "wrote " << m.scenes.size() << " scenes, " << m.samples.size() << " samples to " << out.dir().string()
            << "\n";
  return 0;
}

int cmd_train(const Globals& g, const Inputs& in) {
  const auto c = resolve(g);
  const auto tc = c.resolved_train();
  OutDir out(g.out, g.no_clobber);
  const auto m = manifest(in);
  const auto data = train::load_split(m, "train");
  if (data.empty()) throw Error("dataset has no training samples");
  train::TrainState st;
  if (!in.resume.empty()) {
    auto ck = train::load_checkpoint(in.resume);
    if (train::config_hash(ck.config) != train::config_hash(tc))
      throw ConfigError("checkpoint/config mismatch: " + in.resume + " was trained with a different configuration");
    st = std::move(ck.state);
  } else {
    st = train::init_state(tc);
  }
  const fs::path ckpt = out("checkpoint.bin");
  std::ofstream log(out("metrics.jsonl"), in.resume.empty() ? std::ios::trunc : std::ios::app);
  if (!log) throw IoError("cannot write metrics log in " + out.dir().string());
  save_run_config(out, c);
  train::RunOptions opt;
  opt.log = &log;
  opt.on_checkpoint = [&](const train::TrainState& s) { train::save_checkpoint(ckpt, tc, s); };
  st = train::train(tc, data, std::move(st), opt);
  std::cout << "trained " << st.step << " steps on " << data.size() << " samples; checkpoint " << ckpt.string() << "\n";
  return 0;
}

json tagged_records(const json& records, const pipeline::SplitData& d) {
  json out = records;
  for (auto& r : out) {
    const int i = r.at("index").get<int>();
    r["scene"] = d.scene_of[i];
    r["object_id"] = d.samples[i].object_id;
  }
  return out;
}

RgbImage crop(const RgbImage& img, const BBox& b, int n) { return maskops::crop_resize(img, b, n, n); }
RgbImage crop(const BinaryMask& m, const BBox& b, int n) { return eval::mask_as_image(maskops::crop_resize(m, b, n, n)); }

int cmd_eval_seg(const Globals& g, const Inputs& in) {
  const auto c = resolve(g);
  OutDir out(g.out, g.no_clobber);
  const auto st = settings(c);
  std::optional<train::Checkpoint> ck;
  if (!g.oracle) ck = checkpoint(in, g, c);
  const net::NetConfig net = ck ? ck->config.net : c.train.net;
  const auto d = pipeline::load_split(manifest(in), split_of(in, c));
  const auto r = pipeline::evaluate_segmentation(ck ? &ck->state.params : nullptr, net, d, st);
  json rep = {{"split", split_of(in, c)},
              {"oracle", g.oracle},
              {"threshold", st.threshold},
              {"expansion", st.expansion},
              {"summary", {{"iou_union", r.model.iou_union}, {"iou_visible", r.model.iou_visible},
                           {"iou_invisible", r.model.iou_invisible}, {"objects", r.model.objects},
                           {"occluded", r.model.occluded}}},
              {"copy_baseline", {{"iou_union", r.copy_baseline.iou_union}, {"iou_visible", r.copy_baseline.iou_visible},
                                 {"iou_invisible", r.copy_baseline.iou_invisible}}},
              {"objects", tagged_records(json(r.model.records), d)}};
  write_json(out("seg_report.json"), rep);
  if (c.eval.grid_objects > 0 && !d.samples.empty()) {
    std::vector<std::vector<RgbImage>> rows;
    const int n = c.eval.grid_cell;
    for (std::size_t i = 0; i < d.samples.size() && rows.size() < std::size_t(c.eval.grid_objects); ++i) {
      const auto& s = d.samples[i];
      const BBox b = model::object_box(s.sv, st.expansion);
      const BinaryMask pred = ck ? pipeline::predicted_sf(ck->state.params, net, s, st) : s.sf;
      rows.push_back({crop(s.image, b, n), crop(s.sv, b, n), crop(s.sf, b, n), crop(maskops::binarize(pred, st.threshold), b, n)});
    }
    raster::write_image(out("seg_grid.png"), eval::image_grid(rows, n));
  }
  save_run_config(out, c);
  std::printf("iou union %.4f visible %.4f invisible %.4f over %d objects (%d occluded)\n", r.model.iou_union,
              r.model.iou_visible, r.model.iou_invisible, r.model.objects, r.model.occluded);
  return 0;
}

int cmd_eval_paint(const Globals& g, const Inputs& in) {
  const auto c = resolve(g);
  OutDir out(g.out, g.no_clobber);
  const auto st = settings(c);
  const auto ck = checkpoint(in, g, c);
  const auto& net = ck.config.net;
  const auto m = manifest(in);
  const auto d = pipeline::load_split(m, split_of(in, c));
  const auto ref = pipeline::load_split(m, "train");
  const auto r = pipeline::evaluate_painting(ck.state.params, net, d, ref.samples.empty() ? nullptr : &ref, st);
  json rep = {{"split", split_of(in, c)},
              {"summary", {{"l1", r.model.l1}, {"l2", r.model.l2}, {"objects", r.model.objects}}},
              {"nn_baseline", {{"l1", r.nn_baseline.l1}, {"l2", r.nn_baseline.l2}, {"reference_objects", ref.samples.size()}}},
              {"objects", tagged_records(json(r.model.records), d)}};
  write_json(out("paint_report.json"), rep);
  if (c.eval.grid_objects > 0 && !d.samples.empty()) {
    std::vector<std::vector<RgbImage>> rows;
    const int n = c.eval.grid_cell;
    for (std::size_t i = 0; i < d.samples.size() && rows.size() < std::size_t(c.eval.grid_objects); ++i) {
      const auto& s = d.samples[i];
      const BBox b = model::object_box(s.sv, st.expansion);
      const auto p = model::predict(ck.state.params, net, s.image, s.sv, b, st.threshold);
      std::vector<RgbImage> row{p.composed, pipeline::paint_target(s, net, st), p.painted};
      if (!r.nn_choice.empty()) row.push_back(pipeline::paint_target(ref.samples[r.nn_choice[i]], net, st));
      rows.push_back(std::move(row));
    }
    raster::write_image(out("paint_grid.png"), eval::image_grid(rows, n));
  }
  save_run_config(out, c);
  std::printf("paint l1 %.4f l2 %.4f (nearest neighbour l1 %.4f l2 %.4f) over %d objects\n", r.model.l1, r.model.l2,
              r.nn_baseline.l1, r.nn_baseline.l2, r.model.objects);
  return 0;
}

int cmd_depth_order(const Globals& g, const Inputs& in) {
  const auto c = resolve(g);
  OutDir out(g.out, g.no_clobber);
  const auto st = settings(c);
  std::optional<train::Checkpoint> ck;
  if (!g.oracle) ck = checkpoint(in, g, c);
  const net::NetConfig net = ck ? ck->config.net : c.train.net;
  const auto d = pipeline::load_split(manifest(in), split_of(in, c));
  const auto r = pipeline::evaluate_depth(ck ? &ck->state.params : nullptr, net, d, st);
  json graphs = json::array();
  for (std::size_t i = 0; i < r.graphs.size(); ++i)
    graphs.push_back({{"image", r.graphs[i].image},
                      {"objects", r.graphs[i].objects},
                      {"edges", r.graphs[i].edges},
                      {"gt_pairs", r.gt[i].pairs},
                      {"layers", r.layers[i].layers},
                      {"dropped_edges", r.layers[i].dropped}});
  write_json(out("depth_graphs.json"), graphs);
  write_json(out("depth_report.json"), {{"split", split_of(in, c)},
                                        {"oracle", g.oracle},
                                        {"threshold", st.depth_threshold},
                                        {"accuracy", r.accuracy},
                                        {"images", r.graphs.size()},
                                        {"gt_pairs", r.gt_pair_count}});
  save_run_config(out, c);
  std::printf("depth accuracy %.4f over %zu images (%ld ground-truth pairs)\n", r.accuracy, r.graphs.size(),
              r.gt_pair_count);
  return 0;
}

int cmd_infer(const Globals& g, const Inputs& in) {
  const auto c = resolve(g);
  OutDir out(g.out, g.no_clobber);
  if (in.image.empty() || in.sv.empty()) throw ConfigError("--image and --sv are required");
  const auto ck = checkpoint(in, g, c);
  const RgbImage image = raster::read_image(in.image);
  const BinaryMask sv = raster::read_mask(in.sv);
  if (!image.same_shape(sv)) throw ShapeError("image and visible mask sizes differ");
  if (maskops::count(sv) == 0) throw Error("visible mask " + in.sv + " is empty");
  const BBox box = model::object_box(sv, c.eval.expansion);
  const auto p = model::predict(ck.state.params, ck.config.net, image, sv, box, c.threshold);
  const BinaryMask sf = maskops::binarize(p.pred_sf, c.threshold);
  // Reveal the hidden part: generated pixels where the object is predicted
  // but not visible, the input everywhere else.
  const RgbImage pasted = model::paste_image(image, p.patch, box);
  RgbImage painted = image;
  for (int ch = 0; ch < 3; ++ch)
    for (std::size_t i = 0; i < sf.size(); ++i)
      if (sf.values()[i] >= 0.5f && sv.values()[i] < 0.5f) painted.channel(ch)[i] = pasted.channel(ch)[i];
  raster::write_mask(out("pred_sf.png"), sf);
  raster::write_image(out("patch.png"), p.patch);
  raster::write_image(out("painted.png"), painted);
  save_run_config(out, c);
  std::printf("box %s, predicted %ld object pixels (%ld visible)\n", to_string(box).c_str(), maskops::count(sf),
              maskops::count(sv));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"segpaint: amodal segmentation and painting of occluded objects"};
  app.require_subcommand(1);
  Globals g;
  Inputs in;
  auto global = [&](CLI::App* sub) {
    sub->add_option("--config", g.config, "JSON run configuration")->envname("SEGPAINT_CONFIG");
    sub->add_option("--out", g.out, "output directory")->envname("SEGPAINT_OUT");
    sub->add_option("--seed", g.seed, "global seed")->envname("SEGPAINT_SEED");
    sub->add_option("--device", g.device, "compute device (cpu)")->envname("SEGPAINT_DEVICE");
    sub->add_option("--threshold", g.threshold, "mask binarization threshold")->envname("SEGPAINT_THRESHOLD");
    sub->add_flag("--oracle", g.oracle, "use ground-truth full masks instead of predictions")->envname("SEGPAINT_ORACLE");
    sub->add_flag("--no-clobber", g.no_clobber, "fail instead of overwriting outputs")->envname("SEGPAINT_NO_CLOBBER");
    sub->add_option("--set", g.sets, "config override key.path=value (repeatable)");
  };
  auto data = [&](CLI::App* sub) { sub->add_option("--data", in.data, "dataset manifest (or its directory)"); };
  auto ckpt = [&](CLI::App* sub) { sub->add_option("--checkpoint", in.checkpoint, "trained checkpoint"); };
  auto split = [&](CLI::App* sub) { sub->add_option("--split", in.split, "train or test (default from config)"); };

  auto* gen = app.add_subcommand("gen-data", "generate a layered-scene dataset");
  auto* tr = app.add_subcommand("train", "train segmentor, generator and discriminator");
  auto* es = app.add_subcommand("eval-seg", "visible / invisible / union IoU");
  auto* ep = app.add_subcommand("eval-paint", "painting L1 / L2 and nearest-neighbour baseline");
  auto* dep = app.add_subcommand("depth-order", "occlusion graphs and depth-layering accuracy");
  auto* inf = app.add_subcommand("infer", "predict the full mask and paint one object");
  for (auto* s : {gen, tr, es, ep, dep, inf}) global(s);
  for (auto* s : {tr, es, ep, dep}) data(s);
  for (auto* s : {es, ep, dep, inf}) ckpt(s);
  for (auto* s : {es, ep, dep}) split(s);
  tr->add_option("--resume", in.resume, "continue from this checkpoint");
  inf->add_option("--image", in.image, "input image (PNG)");
  inf->add_option("--sv", in.sv, "visible mask of the object (PNG)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) return cmd_gen_data(g);
    if (*tr) return cmd_train(g, in);
    if (*es) return cmd_eval_seg(g, in);
    if (*ep) return cmd_eval_paint(g, in);
    if (*dep) return cmd_depth_order(g, in);
    if (*inf) return cmd_infer(g, in);
  } catch (const ConfigError& e) {
    std::cerr << "segpaint: config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "segpaint: i/o error: " << e.what() << "\n";
    return 3;
  } catch (const train::TrainError& e) {
    std::cerr << "segpaint: training aborted: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "segpaint: error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
