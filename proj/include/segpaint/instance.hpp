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

#include <optional>
#include <vector>

#include "segpaint/autograd.hpp"
#include "segpaint/image.hpp"
#include "segpaint/maskops.hpp"
#include "segpaint/netarch.hpp"
#include "segpaint/rng.hpp"
#include "segpaint/scenegen.hpp"

// One object instance prepared for the networks, and the shared forward pass
// used by training, evaluation and inference.
namespace segpaint::model {

// Expansion ratio used whenever a deterministic box is needed (evaluation,
// inference). Sits in the middle of the training range.
inline constexpr double kEvalExpansion = 0.2;

struct Instance {
  Tensor<float> input;  // 4 x input x input: RGB + visible mask
  BBox box;             // expanded box in the canvas frame
  BoxF roi;             // the same box in input coordinates
  int canvas_w = 0, canvas_h = 0;
  // Segmentation targets at mask_size. gt_sf keeps the fractional values the
  // bilinear crop produces; the region masks are hard.
  BinaryMask gt_sf, gt_sv, gt_si;
  // Painting frame at paint_size.
  RgbImage paint_image;   // crop of the composite
  BinaryMask paint_sv;    // binarized visible mask
  RgbImage target;        // object rendered without occluders
};

// Box the networks look at: the visible-mask box grown by `ratio` per side.
inline BBox object_box(const BinaryMask& sv, double ratio) {
  const auto b = maskops::bbox_of(sv);
  if (!b) throw Error("object_box: visible mask is empty");
  return maskops::expand_bbox_fixed(*b, ratio, sv.width(), sv.height());
}

// Inputs that do not depend on ground truth.
inline Instance prepare_input(const RgbImage& image, const BinaryMask& sv, const BBox& box, const net::NetConfig& cfg) {
  require_shape(image.same_shape(sv), "prepare_input: image and mask sizes differ");
  if (box.degenerate() || !box.within(sv.width(), sv.height())) throw Error("prepare_input: degenerate box " + to_string(box));
  Instance in;
  in.canvas_w = sv.width(), in.canvas_h = sv.height();
  in.box = box;
  const int n = cfg.input_size;
  const bool native = image.width() == n && image.height() == n;
  in.input = net::stack_input(native ? image : maskops::resize(image, n, n), native ? sv : maskops::resize(sv, n, n));
  in.roi = BoxF::from(box).scaled(double(n) / sv.width(), double(n) / sv.height());
  const int p = cfg.paint_size;
  in.paint_image = maskops::crop_resize(image, box, p, p);
  in.paint_sv = maskops::binarize(maskops::crop_resize(sv, box, p, p));
  return in;
}

inline Instance make_instance(const scene::Sample& s, const BBox& box, const net::NetConfig& cfg) {
  Instance in = prepare_input(s.image, s.sv, box, cfg);
  const int m = cfg.mask_size;
  in.gt_sf = maskops::crop_resize(s.sf, box, m, m);
  const BinaryMask full = maskops::binarize(in.gt_sf);
  in.gt_sv = maskops::mask_and(maskops::binarize(maskops::crop_resize(s.sv, box, m, m)), full);
  in.gt_si = maskops::mask_minus(full, in.gt_sv);
  in.target = maskops::crop_resize(s.object_image, box, cfg.paint_size, cfg.paint_size);
  return in;
}

// Training view of a sample: the visible box is expanded by a random ratio in
// [lo, hi] per side. Returns nothing when the box collapses.
inline std::optional<Instance> training_example(const scene::Sample& s, const net::NetConfig& cfg, double lo,
                                                double hi, RandomSource& rng) {
  const auto tight = maskops::bbox_of(s.sv);
  if (!tight) return std::nullopt;
  const BBox box = maskops::expand_bbox(*tight, lo, hi, rng, s.sv.width(), s.sv.height());
  if (box.degenerate()) return std::nullopt;
  return make_instance(s, box, cfg);
}

struct InstanceVars {
  net::SegmentorVars<float> seg;
  ag::Var composed;  // generator input
  ag::Var painted;   // generator output
};

inline InstanceVars forward(ag::Tape<float>& tape, const net::NetParams<float>& p, const net::NetConfig& cfg,
                            const Instance& in, const net::NoiseState& noise,
                            double threshold = maskops::kDefaultThreshold) {
  InstanceVars v;
  v.seg = net::segmentor_on_tape(tape, p, cfg, tape.constant(in.input), in.roi);
  v.composed = ag::compose_generator_input(tape, net::to_tensor(in.paint_image), v.seg.upsampled,
                                           net::to_tensor(in.paint_sv), threshold);
  v.painted = net::generator_on_tape(tape, p, cfg, v.composed, noise);
  return v;
}

// Paints `crop` (3 x h x w) back over `box` of an existing image.
inline RgbImage paste_image(const RgbImage& base, const RgbImage& crop, const BBox& box) {
  RgbImage out = base;
  const BBox b = maskops::clip(box, base.width(), base.height());
  for (int c = 0; c < 3; ++c) {
    BinaryMask plane(crop.height(), crop.width());
    std::copy(crop.channel(c).begin(), crop.channel(c).end(), plane.values().begin());
    const BinaryMask up = maskops::paste_resize(plane, box, base.height(), base.width());
    for (int y = b.y0; y < b.y1; ++y)
      for (int x = b.x0; x < b.x1; ++x) out(c, y, x) = up(y, x);
  }
  return out;
}

struct Prediction {
  BBox box;
  BinaryMask o;            // mask_size, soft
  BinaryMask pred_sf;      // canvas frame, soft; zero outside the box
  RgbImage composed;       // generator input
  RgbImage painted;        // generator output at paint_size
  RgbImage patch;          // painted with the known visible pixels copied in
};

// Deterministic inference for one object.
inline Prediction predict(const net::NetParams<float>& p, const net::NetConfig& cfg, const RgbImage& image,
                          const BinaryMask& sv, const BBox& box, double threshold = maskops::kDefaultThreshold) {
  const Instance in = prepare_input(image, sv, box, cfg);
  ag::Tape<float> tape(false);
  const auto v = forward(tape, p, cfg, in, net::NoiseState::off(), threshold);
  Prediction r;
  r.box = box;
  r.o = net::to_mask(tape.value(v.seg.o));
  r.pred_sf = maskops::paste_resize(r.o, box, sv.height(), sv.width());
  r.composed = net::to_image(tape.value(v.composed));
  r.painted = net::to_image(tape.value(v.painted));
  r.patch = r.painted;
  for (int c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < r.patch.plane_size(); ++i)
      if (in.paint_sv.values()[i] >= 0.5f) r.patch.channel(c)[i] = in.paint_image.channel(c)[i];
  return r;
}

}  // namespace segpaint::model
