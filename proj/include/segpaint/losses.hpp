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
#include <span>
#include <vector>

#include "segpaint/error.hpp"
#include "segpaint/image.hpp"

namespace segpaint::losses {

inline constexpr double kProbEps = 1e-7;

struct LossWeights {
  double bg = 1.0;
  double sv = 5.0;
  double si = 3.0;
  double l1 = 100.0;
  double lstar = 0.1;

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

// Unweighted loss terms for one instance plus the weighted total.
struct LossBreakdown {
  double bg_bce = 0, sv_bce = 0, si_bce = 0;
  double gan_g = 0, gan_d = 0, l1 = 0;
  double segm = 0, total = 0;

  double segm_from(const LossWeights& w) const { return w.bg * bg_bce + w.sv * sv_bce + w.si * si_bce; }
  double total_from(const LossWeights& w) const { return w.lstar * (gan_g + w.l1 * l1) + segm_from(w); }
  bool finite() const {
    for (double v : {bg_bce, sv_bce, si_bce, gan_g, gan_d, l1, segm, total})
      if (!std::isfinite(v)) return false;
    return true;
  }
};

template <typename T>
struct RegionBce {
  T value = 0;
  bool empty_region = false;
  MaskT<T> grad;  // d value / d o
};

// Binary cross entropy of prediction `o` against (possibly soft) target `g`,
// averaged over the pixels where `region` >= 0.5. An empty region yields 0.
template <typename T>
RegionBce<T> bce_region(const MaskT<T>& g, const MaskT<T>& o, const MaskT<T>& region, double eps = kProbEps) {
  require_shape(g.same_shape(o) && g.same_shape(region), "bce_region: mask shape mismatch");
  RegionBce<T> r;
  r.grad = MaskT<T>(o.height(), o.width());
  auto pg = g.values();
  auto po = o.values();
  auto pr = region.values();
  auto dg = r.grad.values();
  long n = 0;
  for (T v : pr) n += v >= T(0.5);
  if (n == 0) {
    r.empty_region = true;
    return r;
  }
  const T lo = static_cast<T>(eps), hi = static_cast<T>(1 - eps);
  T sum = 0;
  const T inv_n = T(1) / static_cast<T>(n);
  for (std::size_t i = 0; i < po.size(); ++i) {
    if (pr[i] < T(0.5)) continue;
    const T oc = std::clamp(po[i], lo, hi);
    sum += pg[i] * std::log(oc) + (1 - pg[i]) * std::log(1 - oc);
    if (po[i] > lo && po[i] < hi) dg[i] = -inv_n * (pg[i] / oc - (1 - pg[i]) / (1 - oc));
  }
  r.value = -sum * inv_n;
  return r;
}

template <typename T>
struct SegmLoss {
  T value = 0;
  T bg = 0, sv = 0, si = 0;  // unweighted region terms
  MaskT<T> grad;
};

// Weighted three-region segmentation loss. The background region is every
// pixel outside sv and si; each region is averaged over its own pixel count.
template <typename T>
SegmLoss<T> segm_loss(const MaskT<T>& g_sf, const MaskT<T>& o, const MaskT<T>& sv, const MaskT<T>& si,
                      const LossWeights& w, double eps = kProbEps) {
  require_shape(g_sf.same_shape(o) && o.same_shape(sv) && o.same_shape(si), "segm_loss: mask shape mismatch");
  MaskT<T> bg(o.height(), o.width());
  auto psv = sv.values();
  auto psi = si.values();
  auto pbg = bg.values();
  for (std::size_t i = 0; i < psv.size(); ++i) {
    const bool a = psv[i] >= T(0.5), b = psi[i] >= T(0.5);
    if (a && b) throw Error("segm_loss: visible and invisible regions overlap");
    pbg[i] = (a || b) ? T(0) : T(1);
  }
  const auto rb = bce_region(g_sf, o, bg, eps);
  const auto rv = bce_region(g_sf, o, sv, eps);
  const auto ri = bce_region(g_sf, o, si, eps);
  SegmLoss<T> s;
  s.bg = rb.value, s.sv = rv.value, s.si = ri.value;
  s.value = T(w.bg) * s.bg + T(w.sv) * s.sv + T(w.si) * s.si;
  s.grad = MaskT<T>(o.height(), o.width());
  auto d = s.grad.values();
  for (std::size_t i = 0; i < d.size(); ++i)
    d[i] = T(w.bg) * rb.grad.values()[i] + T(w.sv) * rv.grad.values()[i] + T(w.si) * ri.grad.values()[i];
  return s;
}

template <typename T>
struct GanLoss {
  T gan_g = 0;
  T gan_d = 0;
  std::vector<T> dg_dfake;  // generator loss w.r.t. fake scores
  std::vector<T> dd_dreal;  // discriminator loss w.r.t. real scores
  std::vector<T> dd_dfake;  // discriminator loss w.r.t. fake scores
};

// Conditional adversarial losses from discriminator score grids.
//   gan_d = -mean log d_real - mean log(1 - d_fake)
//   gan_g = -mean log d_fake            (non-saturating, default)
//   gan_g =  mean log(1 - d_fake)       (saturating, when `saturating`)
template <typename T>
GanLoss<T> gan_losses(std::span<const T> d_real, std::span<const T> d_fake, bool saturating = false,
                      double eps = kProbEps) {
  GanLoss<T> r;
  r.dd_dreal.assign(d_real.size(), T(0));
  r.dd_dfake.assign(d_fake.size(), T(0));
  r.dg_dfake.assign(d_fake.size(), T(0));
  const T lo = static_cast<T>(eps), hi = static_cast<T>(1 - eps);
  if (!d_real.empty()) {
    const T inv = T(1) / static_cast<T>(d_real.size());
    T s = 0;
    for (std::size_t i = 0; i < d_real.size(); ++i) {
      const T c = std::clamp(d_real[i], lo, hi);
      s += std::log(c);
      if (d_real[i] > lo && d_real[i] < hi) r.dd_dreal[i] = -inv / c;
    }
    r.gan_d -= s * inv;
  }
  if (!d_fake.empty()) {
    const T inv = T(1) / static_cast<T>(d_fake.size());
    T s_d = 0, s_g = 0;
    for (std::size_t i = 0; i < d_fake.size(); ++i) {
      const T c = std::clamp(d_fake[i], lo, hi);
      const bool interior = d_fake[i] > lo && d_fake[i] < hi;
      s_d += std::log(1 - c);
      if (interior) r.dd_dfake[i] = inv / (1 - c);
      if (saturating) {
        s_g += std::log(1 - c);
        if (interior) r.dg_dfake[i] = -inv / (1 - c);
      } else {
        s_g -= std::log(c);
        if (interior) r.dg_dfake[i] = -inv / c;
      }
    }
    r.gan_d -= s_d * inv;
    r.gan_g = s_g * inv;
  }
  return r;
}

template <typename T>
struct PaintL1 {
  T value = 0;
  ImageT<T> grad;
};

// Mean absolute difference over the pixels (all three channels) of `region`,
// or over the whole patch when no region is given.
template <typename T>
PaintL1<T> l1_paint(const ImageT<T>& pred, const ImageT<T>& gt, const MaskT<T>* region = nullptr) {
  require_shape(pred.same_shape(gt), "l1_paint: image shape mismatch");
  if (region) require_shape(pred.same_shape(*region), "l1_paint: region shape mismatch");
  PaintL1<T> r;
  r.grad = ImageT<T>(pred.height(), pred.width());
  const std::size_t plane = pred.plane_size();
  long n = 0;
  for (std::size_t i = 0; i < plane; ++i) n += !region || region->values()[i] >= T(0.5);
  if (n == 0) return r;
  const T inv = T(1) / static_cast<T>(3 * n);
  T sum = 0;
  for (int c = 0; c < 3; ++c) {
    auto p = pred.channel(c);
    auto q = gt.channel(c);
    auto d = r.grad.channel(c);
    for (std::size_t i = 0; i < plane; ++i) {
      if (region && region->values()[i] < T(0.5)) continue;
      const T diff = p[i] - q[i];
      sum += std::abs(diff);
      d[i] = diff > 0 ? inv : (diff < 0 ? -inv : T(0));
    }
  }
  r.value = sum * inv;
  return r;
}

// Joint objective: lstar * (gan_g + l1_weight * l1) + segm. Fills `segm` and
// `total` of the returned breakdown from the unweighted parts.
inline LossBreakdown full_loss(LossBreakdown parts, const LossWeights& w) {
  parts.segm = parts.segm_from(w);
  parts.total = parts.total_from(w);
  return parts;
}

}  // namespace segpaint::losses
