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
#include <optional>
#include <string>
#include <vector>

#include "segpaint/error.hpp"
#include "segpaint/image.hpp"
#include "segpaint/rng.hpp"

// Mask and image algebra: set operations, IoU, generator-input composition,
// box expansion and bilinear crop/resize. Everything here is a pure function.
namespace segpaint::maskops {

inline constexpr double kDefaultThreshold = 0.5;

template <typename T>
MaskT<T> binarize(const MaskT<T>& m, double threshold = kDefaultThreshold) {
  MaskT<T> out(m.height(), m.width());
  auto src = m.values();
  auto dst = out.values();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] >= threshold ? T(1) : T(0);
  return out;
}

template <typename T>
long count(const MaskT<T>& m, double threshold = kDefaultThreshold) {
  return std::count_if(m.values().begin(), m.values().end(), [&](T v) { return v >= threshold; });
}

template <typename T>
bool is_hard(const MaskT<T>& m) {
  return std::all_of(m.values().begin(), m.values().end(), [](T v) { return v == T(0) || v == T(1); });
}

namespace detail {

template <typename T, typename Op>
MaskT<T> combine(const MaskT<T>& a, const MaskT<T>& b, const char* name, Op op) {
  require_shape(a.same_shape(b), std::string(name) + ": mask shape mismatch");
  MaskT<T> out(a.height(), a.width());
  auto pa = a.values();
  auto pb = b.values();
  auto po = out.values();
  for (std::size_t i = 0; i < pa.size(); ++i) po[i] = op(pa[i] >= T(0.5), pb[i] >= T(0.5)) ? T(1) : T(0);
  return out;
}

}  // namespace detail

template <typename T>
MaskT<T> mask_and(const MaskT<T>& a, const MaskT<T>& b) {
  return detail::combine(a, b, "mask_and", [](bool x, bool y) { return x && y; });
}

template <typename T>
MaskT<T> mask_or(const MaskT<T>& a, const MaskT<T>& b) {
  return detail::combine(a, b, "mask_or", [](bool x, bool y) { return x || y; });
}

// a AND NOT b
template <typename T>
MaskT<T> mask_minus(const MaskT<T>& a, const MaskT<T>& b) {
  return detail::combine(a, b, "mask_minus", [](bool x, bool y) { return x && !y; });
}

// Invisible region of an object: sf AND NOT sv. Requires sv to be a subset
// of sf on hard masks.
template <typename T>
MaskT<T> invisible_mask(const MaskT<T>& sf, const MaskT<T>& sv) {
  require_shape(sf.same_shape(sv), "invisible_mask: shape mismatch between sf and sv");
  long violations = 0;
  auto f = sf.values();
  auto v = sv.values();
  for (std::size_t i = 0; i < f.size(); ++i)
    if (v[i] > f[i]) ++violations;
  if (violations > 0)
    throw Error("invisible_mask: visible mask not contained in full mask (" + std::to_string(violations) +
                " violating pixels)");
  return mask_minus(sf, sv);
}

// Intersection over union of two masks after binarizing both at `threshold`.
// Two empty masks agree perfectly (1.0); empty vs non-empty scores 0.0.
template <typename T>
double iou(const MaskT<T>& a, const MaskT<T>& b, double threshold = kDefaultThreshold) {
  require_shape(a.same_shape(b), "iou: mask shape mismatch");
  long inter = 0, uni = 0;
  auto pa = a.values();
  auto pb = b.values();
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const bool x = pa[i] >= threshold;
    const bool y = pb[i] >= threshold;
    inter += (x && y);
    uni += (x || y);
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

enum class Region : unsigned char { kVisible, kInvisible, kBackground };

// Region assignment used by the generator-input composition. Exclusive:
// V first, then O AND NOT V, then everything else.
inline Region classify(bool o, bool v) {
  if (v) return Region::kVisible;
  if (o) return Region::kInvisible;
  return Region::kBackground;
}

// Generator input: copies `image` on the visible mask, paints the predicted
// invisible region (o AND NOT v) pure red and the rest pure blue. Both masks
// are binarized at `threshold` first.
template <typename T>
ImageT<T> compose_generator_input(const ImageT<T>& image, const MaskT<T>& o, const MaskT<T>& v,
                                  double threshold = kDefaultThreshold) {
  require_shape(image.same_shape(o) && image.same_shape(v),
                "compose_generator_input: image and mask shapes differ");
  ImageT<T> out(image.height(), image.width());
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      switch (classify(o(y, x) >= threshold, v(y, x) >= threshold)) {
        case Region::kVisible:
          for (int c = 0; c < 3; ++c) out(c, y, x) = image(c, y, x);
          break;
        case Region::kInvisible:
          out(0, y, x) = T(1), out(1, y, x) = T(0), out(2, y, x) = T(0);
          break;
        case Region::kBackground:
          out(0, y, x) = T(0), out(1, y, x) = T(0), out(2, y, x) = T(1);
          break;
      }
    }
  }
  return out;
}

// Tight box around pixels >= 0.5; nullopt for an empty mask.
template <typename T>
std::optional<BBox> bbox_of(const MaskT<T>& m) {
  int x0 = m.width(), y0 = m.height(), x1 = -1, y1 = -1;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x)
      if (m(y, x) >= T(0.5)) {
        x0 = std::min(x0, x), x1 = std::max(x1, x);
        y0 = std::min(y0, y), y1 = std::max(y1, y);
      }
  if (x1 < 0) return std::nullopt;
  return BBox{x0, y0, x1 + 1, y1 + 1};
}

inline BBox clip(const BBox& b, int width, int height) {
  return {std::clamp(b.x0, 0, width), std::clamp(b.y0, 0, height), std::clamp(b.x1, 0, width),
          std::clamp(b.y1, 0, height)};
}

// Moves each side outward by an independent uniform ratio in [lo, hi] of the
// box side length (draw order: left, top, right, bottom), rounds outward and
// clips to the image.
inline BBox expand_bbox(const BBox& box, double lo, double hi, RandomSource& rng, int width, int height) {
  if (box.degenerate()) throw Error("expand_bbox: degenerate box " + to_string(box));
  if (!(lo >= 0.0 && lo <= hi)) throw Error("expand_bbox: need 0 <= lo <= hi");
  const double w = box.width();
  const double h = box.height();
  const double left = rng.uniform(lo, hi);
  const double top = rng.uniform(lo, hi);
  const double right = rng.uniform(lo, hi);
  const double bottom = rng.uniform(lo, hi);
  BBox out{static_cast<int>(std::floor(box.x0 - left * w)), static_cast<int>(std::floor(box.y0 - top * h)),
           static_cast<int>(std::ceil(box.x1 + right * w)), static_cast<int>(std::ceil(box.y1 + bottom * h))};
  return clip(out, width, height);
}

// Same as expand_bbox with a fixed ratio on every side (no randomness).
inline BBox expand_bbox_fixed(const BBox& box, double ratio, int width, int height) {
  RandomSource unused(0);
  return expand_bbox(box, ratio, ratio, unused, width, height);
}

// One-dimensional bilinear sampling plan. Output index i samples the source
// at s = offset + (i + 0.5) * scale - 0.5 (half-pixel centres, corners not
// aligned), clamped to [lo_clamp, hi_clamp].
struct AxisPlan {
  std::vector<int> lo, hi;
  std::vector<double> frac;

  static AxisPlan make(double offset, double scale, int lo_clamp, int hi_clamp, int out) {
    AxisPlan p;
    p.lo.resize(out), p.hi.resize(out), p.frac.resize(out);
    for (int i = 0; i < out; ++i) {
      double s = offset + (i + 0.5) * scale - 0.5;
      s = std::clamp(s, double(lo_clamp), double(hi_clamp));
      const int l = std::min(static_cast<int>(std::floor(s)), hi_clamp);
      p.lo[i] = l;
      p.hi[i] = std::min(l + 1, hi_clamp);
      p.frac[i] = s - l;
    }
    return p;
  }
};

// Plan sampling box `b` of a source with `src_len` pixels into `out` samples.
inline AxisPlan crop_plan(double b0, double b1, int src_len, int out) {
  const int lo = std::clamp(static_cast<int>(std::floor(b0)), 0, src_len - 1);
  const int hi = std::clamp(static_cast<int>(std::ceil(b1)) - 1, lo, src_len - 1);
  return AxisPlan::make(b0, (b1 - b0) / out, lo, hi, out);
}

template <typename T>
void resample_plane(std::span<const T> src, int src_w, const AxisPlan& ys, const AxisPlan& xs, std::span<T> dst) {
  const int out_h = static_cast<int>(ys.lo.size());
  const int out_w = static_cast<int>(xs.lo.size());
  for (int y = 0; y < out_h; ++y) {
    const T* r0 = src.data() + static_cast<std::size_t>(ys.lo[y]) * src_w;
    const T* r1 = src.data() + static_cast<std::size_t>(ys.hi[y]) * src_w;
    const double fy = ys.frac[y];
    for (int x = 0; x < out_w; ++x) {
      const double fx = xs.frac[x];
      const double top = r0[xs.lo[x]] * (1 - fx) + r0[xs.hi[x]] * fx;
      const double bot = r1[xs.lo[x]] * (1 - fx) + r1[xs.hi[x]] * fx;
      dst[static_cast<std::size_t>(y) * out_w + x] = static_cast<T>(top * (1 - fy) + bot * fy);
    }
  }
}

inline void check_crop(const BoxF& box, int width, int height) {
  if (!(box.x1 > box.x0 && box.y1 > box.y0)) throw Error("crop_resize: empty crop");
  if (box.x0 < 0 || box.y0 < 0 || box.x1 > width || box.y1 > height)
    throw Error("crop_resize: box outside source");
}

// Bilinear resample of the region `box` of `m` to out_h x out_w.
template <typename T>
MaskT<T> crop_resize(const MaskT<T>& m, const BoxF& box, int out_h, int out_w) {
  check_crop(box, m.width(), m.height());
  MaskT<T> out(out_h, out_w);
  resample_plane<T>(m.values(), m.width(), crop_plan(box.y0, box.y1, m.height(), out_h),
                    crop_plan(box.x0, box.x1, m.width(), out_w), out.values());
  return out;
}

template <typename T>
ImageT<T> crop_resize(const ImageT<T>& img, const BoxF& box, int out_h, int out_w) {
  check_crop(box, img.width(), img.height());
  ImageT<T> out(out_h, out_w);
  const auto ys = crop_plan(box.y0, box.y1, img.height(), out_h);
  const auto xs = crop_plan(box.x0, box.x1, img.width(), out_w);
  for (int c = 0; c < 3; ++c) resample_plane<T>(img.channel(c), img.width(), ys, xs, out.channel(c));
  return out;
}

template <typename T>
MaskT<T> crop_resize(const MaskT<T>& m, const BBox& box, int out_h, int out_w) {
  return crop_resize(m, BoxF::from(box), out_h, out_w);
}

template <typename T>
ImageT<T> crop_resize(const ImageT<T>& img, const BBox& box, int out_h, int out_w) {
  return crop_resize(img, BoxF::from(box), out_h, out_w);
}

template <typename T>
MaskT<T> resize(const MaskT<T>& m, int out_h, int out_w) {
  return crop_resize(m, BoxF{0, 0, double(m.width()), double(m.height())}, out_h, out_w);
}

template <typename T>
ImageT<T> resize(const ImageT<T>& img, int out_h, int out_w) {
  return crop_resize(img, BoxF{0, 0, double(img.width()), double(img.height())}, out_h, out_w);
}

// Inverse of crop_resize: places a crop-frame mask back over `box` of a
// height x width frame. Pixels outside the box are 0.
template <typename T>
MaskT<T> paste_resize(const MaskT<T>& crop, const BBox& box, int height, int width) {
  const BBox b = clip(box, width, height);
  if (b.degenerate()) throw Error("paste_resize: box does not intersect the frame");
  MaskT<T> out(height, width);
  const double sx = double(crop.width()) / box.width();
  const double sy = double(crop.height()) / box.height();
  const auto xs = AxisPlan::make(-box.x0 * sx, sx, 0, crop.width() - 1, width);
  const auto ys = AxisPlan::make(-box.y0 * sy, sy, 0, crop.height() - 1, height);
  for (int y = b.y0; y < b.y1; ++y) {
    for (int x = b.x0; x < b.x1; ++x) {
      const double fx = xs.frac[x], fy = ys.frac[y];
      const double top = crop(ys.lo[y], xs.lo[x]) * (1 - fx) + crop(ys.lo[y], xs.hi[x]) * fx;
      const double bot = crop(ys.hi[y], xs.lo[x]) * (1 - fx) + crop(ys.hi[y], xs.hi[x]) * fx;
      out(y, x) = static_cast<T>(top * (1 - fy) + bot * fy);
    }
  }
  return out;
}

}  // namespace segpaint::maskops
