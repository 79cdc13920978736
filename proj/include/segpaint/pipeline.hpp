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

#pragma once

#include <map>
#include <string>
#include <vector>

#include "segpaint/depthlayer.hpp"
#include "segpaint/evalsuite.hpp"
#include "segpaint/instance.hpp"
#include "segpaint/netarch.hpp"
#include "segpaint/scenegen.hpp"

// Whole-split evaluation built from the per-object pieces.
namespace segpaint::pipeline {

struct SplitData {
  std::vector<scene::Sample> samples;
  std::vector<int> scene_of;  // scene index of each sample
};

inline SplitData load_split(const scene::DatasetManifest& m, const std::string& split) {
  SplitData d;
  for (int i : m.split_indices(split)) {
    d.samples.push_back(scene::load_sample(m, i));
    d.scene_of.push_back(m.samples[i].scene);
  }
  return d;
}

// Splits freshly generated scenes (no disk round trip).
inline SplitData from_scenes(const std::vector<scene::LayeredScene>& scenes) {
  SplitData d;
  for (std::size_t i = 0; i < scenes.size(); ++i)
    for (auto& s : scene::derive_masks(scenes[i])) {
      d.samples.push_back(std::move(s));
      d.scene_of.push_back(static_cast<int>(i));
    }
  return d;
}

inline eval::MaskTriple triple(const scene::Sample& s) { return {s.sv, s.si, s.sf}; }

struct Settings {
  double expansion = model::kEvalExpansion;
  double threshold = maskops::kDefaultThreshold;
  double depth_threshold = depth::kDefaultThreshold;
};

// Predicted full mask in the image frame.
inline BinaryMask predicted_sf(const net::NetParams<float>& p, const net::NetConfig& cfg, const scene::Sample& s,
                               const Settings& st) {
  return model::predict(p, cfg, s.image, s.sv, model::object_box(s.sv, st.expansion), st.threshold).pred_sf;
}

struct SegEvaluation {
  eval::IoUReport model;
  eval::IoUReport copy_baseline;  // prediction := visible mask
};

// `params == nullptr` evaluates the oracle (prediction := ground-truth SF).
inline SegEvaluation evaluate_segmentation(const net::NetParams<float>* params, const net::NetConfig& cfg,
                                           const SplitData& d, const Settings& st) {
  std::vector<BinaryMask> preds, copies;
  std::vector<eval::MaskTriple> gts;
  for (const auto& s : d.samples) {
    preds.push_back(params ? predicted_sf(*params, cfg, s, st) : s.sf);
    copies.push_back(s.sv);
    gts.push_back(triple(s));
  }
  return {eval::eval_segmentation(preds, gts, st.threshold), eval::eval_segmentation(copies, gts, st.threshold)};
}

inline RgbImage paint_target(const scene::Sample& s, const net::NetConfig& cfg, const Settings& st) {
  return maskops::crop_resize(s.object_image, model::object_box(s.sv, st.expansion), cfg.paint_size, cfg.paint_size);
}

struct PaintEvaluation {
  eval::PaintReport model;
  eval::PaintReport nn_baseline;
  std::vector<int> nn_choice;  // retrieved reference index per object
};

// Model painting error, and the nearest-neighbour baseline retrieving from
// `reference` (typically the training split).
inline PaintEvaluation evaluate_painting(const net::NetParams<float>& p, const net::NetConfig& cfg, const SplitData& d,
                                         const SplitData* reference, const Settings& st) {
  PaintEvaluation out;
  std::vector<eval::PaintMetrics> model_m, nn_m;
  eval::NearestNeighbor nn;
  std::vector<RgbImage> ref_targets;
  if (reference)
    for (const auto& r : reference->samples) {
      const BBox box = model::object_box(r.sv, st.expansion);
      nn.add(eval::nn_features(p, cfg, r.image, r.sv, box));
      ref_targets.push_back(paint_target(r, cfg, st));
    }
  for (const auto& s : d.samples) {
    const BBox box = model::object_box(s.sv, st.expansion);
    const RgbImage target = paint_target(s, cfg, st);
    const auto pred = model::predict(p, cfg, s.image, s.sv, box, st.threshold);
    model_m.push_back(eval::eval_painting(pred.painted, target));
    if (nn.size() > 0) {
      const auto match = nn.query(eval::nn_features(p, cfg, s.image, s.sv, box));
      out.nn_choice.push_back(match.index);
      nn_m.push_back(eval::eval_painting(ref_targets[match.index], target));
    }
  }
  out.model = eval::summarize_painting(model_m);
  out.nn_baseline = eval::summarize_painting(nn_m);
  return out;
}

struct DepthEvaluation {
  double accuracy = 1.0;
  std::vector<depth::OcclusionGraph> graphs;
  std::vector<depth::GroundTruthPairs> gt;
  std::vector<depth::Layering> layers;
  long gt_pair_count = 0;
};

// Occlusion graphs per scene from predicted full masks (or ground truth when
// `params == nullptr`), scored against depth-rank pairs.
inline DepthEvaluation evaluate_depth(const net::NetParams<float>* params, const net::NetConfig& cfg, const SplitData& d,
                                      const Settings& st) {
  std::map<int, std::vector<int>> by_scene;
  for (std::size_t i = 0; i < d.samples.size(); ++i) by_scene[d.scene_of[i]].push_back(static_cast<int>(i));
  DepthEvaluation out;
  for (const auto& [scene, idx] : by_scene) {
    std::vector<depth::ObjectMasks> objs;
    std::vector<depth::GroundTruthObject> gt;
    for (int i : idx) {
      const auto& s = d.samples[i];
      objs.push_back({s.object_id, s.sv, params ? predicted_sf(*params, cfg, s, st) : s.sf});
      gt.push_back({s.object_id, s.depth_rank, s.sv, s.si});
    }
    out.graphs.push_back(depth::infer_occlusions(objs, st.depth_threshold, scene));
    out.gt.push_back(depth::gt_pairs(gt, st.depth_threshold, scene));
    out.layers.push_back(depth::layer_order(out.graphs.back()));
    out.gt_pair_count += static_cast<long>(out.gt.back().pairs.size());
  }
  out.accuracy = depth::depth_accuracy(out.graphs, out.gt);
  return out;
}

}  // namespace segpaint::pipeline
