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

#include <cmath>
#include <numbers>
#include <vector>

#include "segpaint/losses.hpp"
#include "test_util.hpp"

namespace segpaint {
namespace {

using losses::LossWeights;
using MaskD = MaskT<double>;
using ImageD = ImageT<double>;

// Scalar-loop references, written independently of losses.hpp.
double oracle_bce(const MaskD& g, const MaskD& o, const MaskD& region) {
  double sum = 0;
  int n = 0;
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x) {
      if (region(y, x) < 0.5) continue;
      const double p = std::min(std::max(o(y, x), 1e-7), 1 - 1e-7);
      sum += g(y, x) * std::log(p) + (1 - g(y, x)) * std::log(1 - p);
      ++n;
    }
  return n == 0 ? 0.0 : -sum / n;
}

double oracle_segm(const MaskD& g, const MaskD& o, const MaskD& sv, const MaskD& si, const LossWeights& w) {
  MaskD bg(g.height(), g.width());
  for (int y = 0; y < g.height(); ++y)
    for (int x = 0; x < g.width(); ++x) bg(y, x) = (sv(y, x) < 0.5 && si(y, x) < 0.5) ? 1.0 : 0.0;
  return w.bg * oracle_bce(g, o, bg) + w.sv * oracle_bce(g, o, sv) + w.si * oracle_bce(g, o, si);
}

double oracle_l1(const ImageD& a, const ImageD& b) {
  double s = 0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < a.height(); ++y)
      for (int x = 0; x < a.width(); ++x) s += std::abs(a(c, y, x) - b(c, y, x));
  return s / (3.0 * a.height() * a.width());
}

struct Instance {
  MaskD g, o, sv, si;
};

// Random 6x6 instance with disjoint sv / si and o strictly inside (0, 1).
Instance random_instance(RandomSource& rng) {
  Instance in{MaskD(6, 6), MaskD(6, 6), MaskD(6, 6), MaskD(6, 6)};
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) {
      const int r = rng.uniform_int(0, 2);
      in.sv(y, x) = r == 0;
      in.si(y, x) = r == 1;
      in.g(y, x) = rng.uniform();
      in.o(y, x) = rng.uniform(0.05, 0.95);
    }
  return in;
}

TEST(BceRegion, SinglePixelHalfProbabilityIsLn2) {
  MaskD g(1, 1, 1.0), o(1, 1, 0.5), r(1, 1, 1.0);
  EXPECT_NEAR(losses::bce_region(g, o, r).value, std::numbers::ln2, 1e-12);
}

TEST(BceRegion, MinimisedAtTargetWithEntropyValue) {
  RandomSource rng(1);
  MaskD g = testing::random_soft_mask<double>(4, 4, rng, 0.05, 0.95);
  MaskD all(4, 4, 1.0);
  double entropy = 0;
  for (double p : g.values()) entropy -= p * std::log(p) + (1 - p) * std::log(1 - p);
  entropy /= 16;
  const auto at_target = losses::bce_region(g, g, all);
  EXPECT_NEAR(at_target.value, entropy, 1e-12);
  for (double v : at_target.grad.values()) EXPECT_NEAR(v, 0.0, 1e-12);
  for (int trial = 0; trial < 20; ++trial) {
    MaskD o = testing::random_soft_mask<double>(4, 4, rng, 0.01, 0.99);
    EXPECT_GE(losses::bce_region(g, o, all).value, at_target.value);
  }
}

TEST(BceRegion, MatchesLoopOracleAndIsNonNegative) {
  RandomSource rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    MaskD g = testing::random_soft_mask<double>(6, 6, rng);
    MaskD o = testing::random_soft_mask<double>(6, 6, rng);
    MaskD r(6, 6);
    for (auto& v : r.values()) v = rng.bernoulli(0.4);
    const auto res = losses::bce_region(g, o, r);
    ASSERT_NEAR(res.value, oracle_bce(g, o, r), 1e-12);
    ASSERT_GE(res.value, 0.0);
  }
}

TEST(BceRegion, EmptyRegionIsZeroWithFlag) {
  MaskD g(3, 3, 1.0), o(3, 3, 0.3), r(3, 3, 0.0);
  const auto res = losses::bce_region(g, o, r);
  EXPECT_EQ(res.value, 0.0);
  EXPECT_TRUE(res.empty_region);
}

TEST(BceRegion, ClampsExactZeroAndOne) {
  MaskD g(1, 2), o(1, 2), r(1, 2, 1.0);
  g(0, 0) = 1, o(0, 0) = 0;
  g(0, 1) = 0, o(0, 1) = 1;
  const auto res = losses::bce_region(g, o, r);
  EXPECT_TRUE(std::isfinite(res.value));
  EXPECT_NEAR(res.value, -std::log(1e-7), 1e-6);
}

TEST(SegmLoss, MatchesWeightedLoopOracle) {
  RandomSource rng(3);
  const LossWeights w;
  for (int trial = 0; trial < 200; ++trial) {
    Instance in = random_instance(rng);
    const auto s = losses::segm_loss(in.g, in.o, in.sv, in.si, w);
    ASSERT_NEAR(s.value, oracle_segm(in.g, in.o, in.sv, in.si, w), 1e-12);
  }
}

TEST(SegmLoss, VanishesAsPredictionApproachesHardTarget) {
  MaskD sv(4, 4), si(4, 4), g(4, 4);
  for (int x = 0; x < 4; ++x) sv(0, x) = 1, si(1, x) = 1, g(0, x) = 1, g(1, x) = 1;
  double prev = 1e9;
  for (double eps : {1e-1, 1e-2, 1e-3, 1e-5}) {
    MaskD o(4, 4);
    for (std::size_t i = 0; i < o.size(); ++i) o.values()[i] = g.values()[i] == 1 ? 1 - eps : eps;
    const double v = losses::segm_loss(g, o, sv, si, LossWeights{}).value;
    EXPECT_LT(v, prev);
    prev = v;
  }
  EXPECT_LT(prev, 1e-4);
}

TEST(SegmLoss, EmptyInvisibleRegionContributesNothing) {
  RandomSource rng(4);
  Instance in = random_instance(rng);
  std::fill(in.si.values().begin(), in.si.values().end(), 0.0);
  const auto s = losses::segm_loss(in.g, in.o, in.sv, in.si, LossWeights{});
  EXPECT_EQ(s.si, 0.0);
  EXPECT_NEAR(s.value, 1.0 * s.bg + 5.0 * s.sv, 1e-12);
}

TEST(SegmLoss, OverlappingRegionsRejected) {
  MaskD ones(2, 2, 1.0);
  EXPECT_THROW(losses::segm_loss(ones, MaskD(2, 2, 0.5), ones, ones, LossWeights{}), Error);
}

TEST(SegmLoss, ScalingOneWeightScalesOnlyThatTerm) {
  RandomSource rng(5);
  Instance in = random_instance(rng);
  LossWeights w;
  const auto base = losses::segm_loss(in.g, in.o, in.sv, in.si, w);
  w.si *= 2.5;
  const auto scaled = losses::segm_loss(in.g, in.o, in.sv, in.si, w);
  EXPECT_EQ(base.bg, scaled.bg);
  EXPECT_EQ(base.sv, scaled.sv);
  EXPECT_EQ(base.si, scaled.si);
  EXPECT_NEAR(scaled.value - base.value, 1.5 * 3.0 * base.si, 1e-12);
}

TEST(SegmLoss, RegionsTilePatch) {
  // Changing the target on a pixel only moves the term of its own region.
  RandomSource rng(6);
  Instance in = random_instance(rng);
  int pix = 0;
  while (in.sv.values()[pix] < 0.5) ++pix;
  const auto a = losses::segm_loss(in.g, in.o, in.sv, in.si, LossWeights{});
  in.g.values()[pix] = 1 - in.g.values()[pix];
  const auto b = losses::segm_loss(in.g, in.o, in.sv, in.si, LossWeights{});
  EXPECT_EQ(a.bg, b.bg);
  EXPECT_EQ(a.si, b.si);
  EXPECT_NE(a.sv, b.sv);
}

TEST(GanLosses, HalfScoresGiveTwoLn2) {
  std::vector<double> half(16, 0.5);
  const auto r = losses::gan_losses<double>(half, half);
  EXPECT_NEAR(r.gan_d, 2 * std::numbers::ln2, 1e-12);
  EXPECT_NEAR(r.gan_g, std::numbers::ln2, 1e-12);
}

TEST(GanLosses, GeneratorLossVanishesWhenDiscriminatorFooled) {
  std::vector<double> real(4, 0.5);
  double prev = 1e9;
  for (double f : {0.9, 0.99, 0.9999, 1.0}) {
    std::vector<double> fake(4, f);
    const double g = losses::gan_losses<double>(real, fake).gan_g;
    EXPECT_LE(g, prev);
    prev = g;
  }
  EXPECT_LT(prev, 1e-6);
}

TEST(GanLosses, MatchesLoopOracle) {
  RandomSource rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> real(36), fake(36);
    for (auto& v : real) v = rng.uniform(0.01, 0.99);
    for (auto& v : fake) v = rng.uniform(0.01, 0.99);
    double lr = 0, lf = 0, lg = 0;
    for (int i = 0; i < 36; ++i) {
      lr += std::log(real[i]);
      lf += std::log(1 - fake[i]);
      lg += std::log(fake[i]);
    }
    const auto r = losses::gan_losses<double>(real, fake);
    ASSERT_NEAR(r.gan_d, -lr / 36 - lf / 36, 1e-12);
    ASSERT_NEAR(r.gan_g, -lg / 36, 1e-12);
    const auto sat = losses::gan_losses<double>(real, fake, true);
    ASSERT_NEAR(sat.gan_g, lf / 36, 1e-12);
  }
}

TEST(GanLosses, EqualDistributionsAtOptimumGiveTwoLn2) {
  // The optimal discriminator for identical real / fake distributions outputs
  // 1/2 everywhere.
  std::vector<double> real(1000, 0.5), fake(1000, 0.5);
  EXPECT_NEAR(losses::gan_losses<double>(real, fake).gan_d, 2 * std::numbers::ln2, 1e-12);
}

TEST(L1Paint, IdentityOffsetAndLoopOracle) {
  RandomSource rng(8);
  ImageD a = testing::random_image<double>(6, 6, rng);
  EXPECT_EQ(losses::l1_paint(a, a).value, 0.0);
  ImageD b = a;
  for (auto& v : b.values()) v += 0.1;
  EXPECT_NEAR(losses::l1_paint(b, a).value, 0.1, 1e-12);
  for (int trial = 0; trial < 100; ++trial) {
    ImageD p = testing::random_image<double>(6, 6, rng), q = testing::random_image<double>(6, 6, rng);
    ASSERT_NEAR(losses::l1_paint(p, q).value, oracle_l1(p, q), 1e-12);
  }
  EXPECT_THROW(losses::l1_paint(ImageD(3, 3), ImageD(3, 4)), ShapeError);
}

TEST(L1Paint, RegionRestrictsAverage) {
  ImageD a(2, 2), b(2, 2);
  a(0, 0, 0) = 0.6;
  MaskD region(2, 2);
  region(0, 0) = 1;
  EXPECT_NEAR(losses::l1_paint(a, b, &region).value, 0.2, 1e-12);
}

TEST(FullLoss, ZeroPartsAndDefaultWeightArithmetic) {
  EXPECT_EQ(losses::full_loss({}, LossWeights{}).total, 0.0);
  losses::LossBreakdown unit;
  unit.bg_bce = unit.sv_bce = unit.si_bce = unit.gan_g = unit.l1 = 1.0;
  const auto r = losses::full_loss(unit, LossWeights{});
  EXPECT_NEAR(r.total, 19.1, 1e-12);
  EXPECT_NEAR(r.segm, 9.0, 1e-12);
}

// Total joint loss as a function of the predicted mask only.
double total_of(const Instance& in, const MaskD& o, double gan_g, double l1, const LossWeights& w) {
  const auto s = losses::segm_loss(in.g, o, in.sv, in.si, w);
  losses::LossBreakdown parts;
  parts.bg_bce = s.bg, parts.sv_bce = s.sv, parts.si_bce = s.si, parts.gan_g = gan_g, parts.l1 = l1;
  return losses::full_loss(parts, w).total;
}

TEST(Gradients, SegmAndFullLossMatchCentralDifferences) {
  RandomSource rng(9);
  const LossWeights w;
  for (int trial = 0; trial < 20; ++trial) {
    Instance in = random_instance(rng);
    const auto s = losses::segm_loss(in.g, in.o, in.sv, in.si, w);
    const double h = 1e-6;
    for (std::size_t i = 0; i < in.o.size(); ++i) {
      MaskD up = in.o, dn = in.o;
      up.values()[i] += h;
      dn.values()[i] -= h;
      const double fd_segm =
          (losses::segm_loss(in.g, up, in.sv, in.si, w).value - losses::segm_loss(in.g, dn, in.sv, in.si, w).value) /
          (2 * h);
      const double fd_full = (total_of(in, up, 0.7, 0.2, w) - total_of(in, dn, 0.7, 0.2, w)) / (2 * h);
      const double a = s.grad.values()[i];
      ASSERT_LT(std::abs(a - fd_segm), 1e-4 * std::max(1.0, std::abs(fd_segm)));
      ASSERT_LT(std::abs(a - fd_full), 1e-4 * std::max(1.0, std::abs(fd_full)));
    }
  }
}

TEST(Gradients, GanAndL1MatchCentralDifferences) {
  RandomSource rng(10);
  std::vector<double> real(9), fake(9);
  for (auto& v : real) v = rng.uniform(0.1, 0.9);
  for (auto& v : fake) v = rng.uniform(0.1, 0.9);
  const auto r = losses::gan_losses<double>(real, fake);
  const double h = 1e-6;
  for (std::size_t i = 0; i < fake.size(); ++i) {
    auto up = fake, dn = fake;
    up[i] += h, dn[i] -= h;
    const auto a = losses::gan_losses<double>(real, up), b = losses::gan_losses<double>(real, dn);
    EXPECT_NEAR(r.dg_dfake[i], (a.gan_g - b.gan_g) / (2 * h), 1e-6);
    EXPECT_NEAR(r.dd_dfake[i], (a.gan_d - b.gan_d) / (2 * h), 1e-6);
    auto ru = real, rd = real;
    ru[i] += h, rd[i] -= h;
    EXPECT_NEAR(r.dd_dreal[i], (losses::gan_losses<double>(ru, fake).gan_d - losses::gan_losses<double>(rd, fake).gan_d) / (2 * h),
                1e-6);
  }
  ImageD p = testing::random_image<double>(3, 3, rng), q = testing::random_image<double>(3, 3, rng);
  const auto l = losses::l1_paint(p, q);
  for (std::size_t i = 0; i < p.values().size(); ++i) {
    ImageD up = p, dn = p;
    up.values()[i] += h, dn.values()[i] -= h;
    EXPECT_NEAR(l.grad.values()[i], (losses::l1_paint(up, q).value - losses::l1_paint(dn, q).value) / (2 * h), 1e-6);
  }
}

}  // namespace
}  // namespace segpaint
