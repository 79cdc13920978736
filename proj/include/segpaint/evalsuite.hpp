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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "json.hpp"
#include "segpaint/autograd.hpp"
#include "segpaint/error.hpp"
#include "segpaint/image.hpp"
#include "segpaint/maskops.hpp"
#include "segpaint/netarch.hpp"

// Segmentation and painting metrics, and the nearest-neighbour baseline.
namespace segpaint::eval {

struct MaskTriple {
  BinaryMask sv, si, sf;
};

struct ObjectIoU {
  int index = 0;  // position in the evaluated list
  double iou_union = 0, iou_visible = 0, iou_invisible = 0;
  bool occluded = false;  // ground truth has invisible pixels
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ObjectIoU, index, iou_union, iou_visible, iou_invisible, occluded)

// Means are taken over all objects for union and visible IoU, and over
// occluded objects only for invisible IoU (an unoccluded object has nothing
// to recover).
struct IoUReport {
  double threshold = maskops::kDefaultThreshold;
  double iou_union = 0, iou_visible = 0, iou_invisible = 0;
  int objects = 0, occluded = 0;
  std::vector<ObjectIoU> records;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(IoUReport, threshold, iou_union, iou_visible, iou_invisible, objects, occluded,
                                   records)

namespace detail {

// Order-independent mean: values are summed in sorted order.
inline double mean_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace detail

// Per-object IoUs of a predicted full mask against the ground-truth triple.
//   union:     IoU(pred, SF)
//   invisible: IoU(pred minus SV, SI)
//   visible:   IoU(pred, SV) restricted to pixels outside SI
inline ObjectIoU object_iou(const BinaryMask& pred, const MaskTriple& gt, double threshold = maskops::kDefaultThreshold) {
  require_shape(pred.same_shape(gt.sv) && pred.same_shape(gt.si) && pred.same_shape(gt.sf),
                "eval_segmentation: prediction and ground truth sizes differ");
  const BinaryMask p = maskops::binarize(pred, threshold);
  const BinaryMask sv = maskops::binarize(gt.sv), si = maskops::binarize(gt.si), sf = maskops::binarize(gt.sf);
  ObjectIoU r;
  r.iou_union = maskops::iou(p, sf);
  r.iou_invisible = maskops::iou(maskops::mask_minus(p, sv), si);
  r.iou_visible = maskops::iou(maskops::mask_minus(p, si), sv);
  r.occluded = maskops::count(si) > 0;
  return r;
}

inline void finalize(IoUReport& rep) {
  std::vector<double> u, v, inv;
  for (const auto& r : rep.records) {
    u.push_back(r.iou_union);
    v.push_back(r.iou_visible);
    if (r.occluded) inv.push_back(r.iou_invisible);
  }
  rep.objects = static_cast<int>(rep.records.size());
  rep.occluded = static_cast<int>(inv.size());
  rep.iou_union = detail::mean_of(u);
  rep.iou_visible = detail::mean_of(v);
  rep.iou_invisible = detail::mean_of(inv);
}

inline IoUReport eval_segmentation(const std::vector<BinaryMask>& preds, const std::vector<MaskTriple>& gts,
                                   double threshold = maskops::kDefaultThreshold) {
  if (preds.size() != gts.size()) throw ShapeError("eval_segmentation: prediction and ground truth counts differ");
  IoUReport rep;
  rep.threshold = threshold;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    rep.records.push_back(object_iou(preds[i], gts[i], threshold));
    rep.records.back().index = static_cast<int>(i);
  }
  finalize(rep);
  return rep;
}

struct PaintMetrics {
  double l1 = 0, l2 = 0;
};

// Mean absolute and mean squared difference over every pixel and channel.
inline PaintMetrics eval_painting(const RgbImage& pred, const RgbImage& gt) {
  require_shape(pred.same_shape(gt), "eval_painting: image sizes differ");
  PaintMetrics m;
  const auto a = pred.values(), b = gt.values();
  if (a.empty()) return m;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = double(a[i]) - double(b[i]);
    m.l1 += std::abs(d);
    m.l2 += d * d;
  }
  m.l1 /= double(a.size());
  m.l2 /= double(a.size());
  return m;
}

struct PaintRecord {
  int index = 0;
  double l1 = 0, l2 = 0;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PaintRecord, index, l1, l2)

struct PaintReport {
  double l1 = 0, l2 = 0;
  int objects = 0;
  std::vector<PaintRecord> records;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PaintReport, l1, l2, objects, records)

inline PaintReport summarize_painting(const std::vector<PaintMetrics>& per_object) {
  PaintReport rep;
  std::vector<double> l1, l2;
  for (std::size_t i = 0; i < per_object.size(); ++i) {
    rep.records.push_back({static_cast<int>(i), per_object[i].l1, per_object[i].l2});
    l1.push_back(per_object[i].l1);
    l2.push_back(per_object[i].l2);
  }
  rep.objects = static_cast<int>(per_object.size());
  rep.l1 = detail::mean_of(l1);
  rep.l2 = detail::mean_of(l2);
  return rep;
}

// ---------------------------------------------------------------------------
// Nearest-neighbour baseline: retrieve the training object whose features
// are closest and reuse its ground-truth appearance.

// Descriptor of one object: ROI-pooled map of the frozen segmentor backbone,
// followed by the visible mask and image cropped to the same grid.
inline std::vector<float> nn_features(const net::NetParams<float>& p, const net::NetConfig& cfg, const RgbImage& image,
                                      const BinaryMask& sv, const BBox& box) {
  const int n = cfg.input_size, g = cfg.roi_grid;
  const bool native = image.width() == n && image.height() == n;
  ag::Tape<float> tape(false);
  auto in = tape.constant(net::stack_input(native ? image : maskops::resize(image, n, n),
                                           native ? sv : maskops::resize(sv, n, n)));
  auto feat = net::backbone_on_tape(tape, p, cfg, in);
  const double s = double(cfg.feature_size());
  const BoxF roi = BoxF::from(box).scaled(s / sv.width(), s / sv.height());
  auto pooled = ag::roi_max_pool(tape, feat, roi, g);
  const auto& pv = tape.value(pooled).data;
  std::vector<float> f(pv.begin(), pv.end());
  const auto m = maskops::crop_resize(sv, box, g, g);
  f.insert(f.end(), m.storage().begin(), m.storage().end());
  const auto im = maskops::crop_resize(image, box, g, g);
  f.insert(f.end(), im.storage().begin(), im.storage().end());
  return f;
}

struct Match {
  int index = -1;
  double distance = 0;  // Euclidean
};

class NearestNeighbor {
 public:
  void add(std::vector<float> f) {
    if (!bank_.empty() && f.size() != bank_.front().size()) throw ShapeError("nn_baseline: feature length mismatch");
    bank_.push_back(std::move(f));
  }
  std::size_t size() const { return bank_.size(); }

  // Closest stored entry; ties go to the lowest index.
  Match query(const std::vector<float>& f) const {
    if (bank_.empty()) throw Error("nn_baseline: empty training set");
    if (f.size() != bank_.front().size()) throw ShapeError("nn_baseline: feature length mismatch");
    Match best{-1, std::numeric_limits<double>::infinity()};
    for (std::size_t i = 0; i < bank_.size(); ++i) {
      double d = 0;
      for (std::size_t k = 0; k < f.size(); ++k) {
        const double e = double(f[k]) - double(bank_[i][k]);
        d += e * e;
      }
      if (d < best.distance) best = {static_cast<int>(i), d};
    }
    best.distance = std::sqrt(best.distance);
    return best;
  }

 private:
  std::vector<std::vector<float>> bank_;
};

// ---------------------------------------------------------------------------
// Image grids for qualitative inspection.

inline RgbImage mask_as_image(const BinaryMask& m) {
  RgbImage img(m.height(), m.width());
  for (int c = 0; c < 3; ++c) std::copy(m.values().begin(), m.values().end(), img.channel(c).begin());
  return img;
}

// Rows of equally sized tiles separated by a 2-pixel white gutter. Tiles are
// resized to `cell` x `cell`.
inline RgbImage image_grid(const std::vector<std::vector<RgbImage>>& rows, int cell) {
  if (rows.empty()) throw Error("image_grid: no rows");
  constexpr int gap = 2;
  std::size_t cols = 0;
  for (const auto& r : rows) cols = std::max(cols, r.size());
  const int w = static_cast<int>(cols) * (cell + gap) + gap;
  const int h = static_cast<int>(rows.size()) * (cell + gap) + gap;
  RgbImage out = RgbImage::filled(h, w, 1.f, 1.f, 1.f);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      const RgbImage t = maskops::resize(rows[r][c], cell, cell);
      const int oy = gap + static_cast<int>(r) * (cell + gap), ox = gap + static_cast<int>(c) * (cell + gap);
      for (int ch = 0; ch < 3; ++ch)
        for (int y = 0; y < cell; ++y)
          for (int x = 0; x < cell; ++x) out(ch, oy + y, ox + x) = t(ch, y, x);
    }
  return out;
}

}  // namespace segpaint::eval
