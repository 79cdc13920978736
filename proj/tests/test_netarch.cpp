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
#include <numeric>

#include "segpaint/instance.hpp"
#include "segpaint/losses.hpp"
#include "segpaint/netarch.hpp"
#include "segpaint/trainer.hpp"
#include "test_util.hpp"

namespace segpaint {
namespace {

using net::NetConfig;

NetConfig tiny() {
  NetConfig c;
  c.input_size = 32;
  c.roi_grid = 6;
  c.mask_size = 8;
  c.paint_size = 16;
  c.backbone_width = 4;
  c.gen_depth = 2;
  c.gen_base_width = 4;
  c.gen_max_width = 8;
  c.disc_layers = 3;
  c.disc_base_width = 4;
  return c;
}

std::vector<NetConfig> config_grid() {
  std::vector<NetConfig> out{NetConfig{}, tiny()};
  NetConfig a = tiny();
  a.backbone_blocks = 0, a.backbone_stride = 1, a.stem_kernel = 1;
  out.push_back(a);
  NetConfig b = tiny();
  b.backbone_blocks = 2, b.mask_size = 5, b.roi_grid = 3, b.noise_mode = net::NoiseMode::kChannel;
  out.push_back(b);
  NetConfig c = tiny();
  c.paint_size = 32, c.gen_depth = 3, c.disc_layers = 4, c.noise_mode = net::NoiseMode::kNone, c.gen_skips = false;
  out.push_back(c);
  return out;
}

BoxF centre_box(const NetConfig& c) {
  const double n = c.input_size;
  return {0.25 * n, 0.2 * n, 0.7 * n, 0.8 * n};
}

TEST(NetArch, ShapesAndRangesAcrossConfigGrid) {
  for (const auto& cfg : config_grid()) {
    RandomSource rng(3);
    const auto p = net::init_params<float>(cfg, rng);
    const auto img = testing::random_image(cfg.input_size, cfg.input_size, rng);
    const auto sv = testing::random_hard_mask(cfg.input_size, cfg.input_size, rng);
    const auto seg = net::segmentor_forward(p, cfg, img, sv, centre_box(cfg));
    ASSERT_EQ(seg.o.height(), cfg.mask_size);
    ASSERT_EQ(seg.o.width(), cfg.mask_size);
    ASSERT_EQ(seg.upsampled.height(), cfg.paint_size);
    for (float v : seg.o.values()) ASSERT_TRUE(v > 0.f && v < 1.f);

    const auto m = testing::random_image(cfg.paint_size, cfg.paint_size, rng);
    const auto g = net::generator_forward(p, cfg, m);
    ASSERT_EQ(g.height(), cfg.paint_size);
    ASSERT_EQ(g.width(), cfg.paint_size);
    for (float v : g.values()) ASSERT_TRUE(v >= 0.f && v <= 1.f);

    const auto d = net::discriminator_forward(p, cfg, m, g);
    ASSERT_EQ(d.height(), cfg.score_size());
    for (float v : d.values()) ASSERT_TRUE(v > 0.f && v < 1.f);
  }
}

TEST(NetArch, FcOutputMatchesMaskGrid) {
  NetConfig cfg;
  RandomSource rng(1);
  const auto p = net::init_params<float>(cfg, rng);
  EXPECT_EQ(p.value("seg.fc.w").c, cfg.mask_size * cfg.mask_size);
  EXPECT_EQ(p.value("seg.fc.w").h, cfg.roi_grid * cfg.roi_grid);
  const auto full = NetConfig::full_scale();
  EXPECT_EQ(full.mask_size * full.mask_size, 3364);
  EXPECT_NO_THROW(full.validate());
}

TEST(NetArch, UpsampleIsParameterFreeBilinear) {
  const auto cfg = tiny();
  RandomSource rng(2);
  const auto p = net::init_params<float>(cfg, rng);
  for (const auto& e : p) {
    EXPECT_EQ(e.name.find("up"), std::string::npos) << e.name;
  }
  const auto img = testing::random_image(cfg.input_size, cfg.input_size, rng);
  const auto sv = testing::random_hard_mask(cfg.input_size, cfg.input_size, rng);
  const auto seg = net::segmentor_forward(p, cfg, img, sv, centre_box(cfg));
  EXPECT_EQ(seg.upsampled, maskops::resize(seg.o, cfg.paint_size, cfg.paint_size));
}

TEST(NetArch, StubBackboneIgnoresPixelsOutsideBox) {
  auto cfg = tiny();
  cfg.backbone_blocks = 0, cfg.backbone_stride = 1, cfg.stem_kernel = 1;
  RandomSource rng(4);
  const auto p = net::init_params<float>(cfg, rng);
  auto img = testing::random_image(cfg.input_size, cfg.input_size, rng);
  auto sv = testing::random_hard_mask(cfg.input_size, cfg.input_size, rng);
  const BoxF box{8, 6, 20, 24};
  const auto base = net::segmentor_forward(p, cfg, img, sv, box).o;
  auto outside = img;
  auto sv_out = sv;
  for (int y = 0; y < cfg.input_size; ++y)
    for (int x = 0; x < cfg.input_size; ++x)
      if (x < 8 || x >= 20 || y < 6 || y >= 24) {
        for (int c = 0; c < 3; ++c) outside(c, y, x) = 1.f - outside(c, y, x);
        sv_out(y, x) = 1.f - sv_out(y, x);
      }
  EXPECT_EQ(net::segmentor_forward(p, cfg, outside, sv_out, box).o, base);
  auto inside = img;
  for (int c = 0; c < 3; ++c)
    for (int y = 6; y < 24; ++y)
      for (int x = 8; x < 20; ++x) inside(c, y, x) = 1.f - inside(c, y, x);
  EXPECT_NE(net::segmentor_forward(p, cfg, inside, sv, box).o, base);
}

TEST(NetArch, BoxOutsideImageRejected) {
  const auto cfg = tiny();
  RandomSource rng(5);
  const auto p = net::init_params<float>(cfg, rng);
  const auto img = testing::random_image(cfg.input_size, cfg.input_size, rng);
  const auto sv = testing::random_hard_mask(cfg.input_size, cfg.input_size, rng);
  EXPECT_THROW(net::segmentor_forward(p, cfg, img, sv, BoxF{-2, 0, 10, 10}), Error);
  EXPECT_THROW(net::segmentor_forward(p, cfg, img, sv, BoxF{4, 4, 4, 10}), Error);
  EXPECT_THROW(net::segmentor_forward(p, cfg, img, sv, BoxF{0, 0, 40, 10}), Error);
}

TEST(NetArch, ShapeErrors) {
  const auto cfg = tiny();
  RandomSource rng(6);
  const auto p = net::init_params<float>(cfg, rng);
  const auto wrong = testing::random_image(cfg.paint_size + 4, cfg.paint_size + 4, rng);
  const auto ok = testing::random_image(cfg.paint_size, cfg.paint_size, rng);
  EXPECT_THROW(net::generator_forward(p, cfg, wrong), ShapeError);
  EXPECT_THROW(net::discriminator_forward(p, cfg, ok, wrong), ShapeError);
  const auto small = testing::random_image(16, 16, rng);
  EXPECT_THROW(net::segmentor_forward(p, cfg, small, testing::random_hard_mask(16, 16, rng), BoxF{0, 0, 8, 8}),
               ShapeError);
}

TEST(NetArch, InvalidConfigsRejected) {
  auto c = tiny();
  c.paint_size = 18;  // not divisible by 2^gen_depth
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny();
  c.stem_kernel = 2;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny();
  c.dropout_rate = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  RandomSource rng(0);
  EXPECT_THROW(net::init_params<float>(c, rng), ConfigError);
}

TEST(NetArch, InitIsSeededAndFinite) {
  const auto cfg = tiny();
  RandomSource a(9), b(9), c(10);
  const auto pa = net::init_params<float>(cfg, a);
  EXPECT_EQ(pa, net::init_params<float>(cfg, b));
  EXPECT_FALSE(pa == net::init_params<float>(cfg, c));
  EXPECT_TRUE(net::all_finite(pa));
}

TEST(NetArch, GeneratorDeterministicWithoutNoise) {
  for (auto mode : {net::NoiseMode::kDropout, net::NoiseMode::kChannel}) {
    auto cfg = tiny();
    cfg.noise_mode = mode;
    RandomSource rng(11);
    const auto p = net::init_params<float>(cfg, rng);
    const auto m = testing::random_image(cfg.paint_size, cfg.paint_size, rng);
    EXPECT_EQ(net::generator_forward(p, cfg, m), net::generator_forward(p, cfg, m));
    RandomSource n1(1), n2(2);
    EXPECT_NE(net::generator_forward(p, cfg, m, net::NoiseState::on(n1)),
              net::generator_forward(p, cfg, m, net::NoiseState::on(n2)));
  }
}

TEST(NetArch, FreshDiscriminatorScoresNearHalf) {
  NetConfig cfg;
  RandomSource data(12);
  const auto cond = testing::random_image(cfg.paint_size, cfg.paint_size, data);
  const auto judged = testing::random_image(cfg.paint_size, cfg.paint_size, data);
  double total = 0;
  for (int seed = 0; seed < 100; ++seed) {
    RandomSource rng(1000 + seed);
    const auto p = net::init_params<float>(cfg, rng);
    const auto d = net::discriminator_forward(p, cfg, cond, judged);
    total += std::accumulate(d.values().begin(), d.values().end(), 0.0) / double(d.size());
  }
  EXPECT_NEAR(total / 100, 0.5, 0.15);
}

TEST(NetArch, DiscriminatorSeesBothInputs) {
  const auto cfg = tiny();
  RandomSource rng(13);
  const auto p = net::init_params<float>(cfg, rng);
  const auto a = testing::random_image(cfg.paint_size, cfg.paint_size, rng);
  const auto b = testing::random_image(cfg.paint_size, cfg.paint_size, rng);
  const auto c = testing::random_image(cfg.paint_size, cfg.paint_size, rng);
  const auto base = net::discriminator_forward(p, cfg, a, b);
  EXPECT_NE(net::discriminator_forward(p, cfg, a, c), base);
  EXPECT_NE(net::discriminator_forward(p, cfg, c, b), base);
}

// Adversarial + L1 alone must still move the segmentor: the only path is
// through the composed generator input.
TEST(NetArch, PaintingLossReachesSegmentor) {
  auto cfg = tiny();
  cfg.noise_mode = net::NoiseMode::kNone;
  RandomSource rng(14);
  const auto p = net::init_params<float>(cfg, rng);
  const auto img = testing::random_image(cfg.input_size, cfg.input_size, rng);
  const auto sv = testing::disk_mask(cfg.input_size, cfg.input_size, 15, 16, 6);
  const BBox box{6, 6, 26, 26};
  model::Instance in = model::prepare_input(img, sv, box, cfg);
  in.target = testing::random_image(cfg.paint_size, cfg.paint_size, rng);

  ag::Tape<float> tape(true);
  const auto v = model::forward(tape, p, cfg, in, net::NoiseState::off());
  const auto fake = net::discriminator_on_tape(tape, p, cfg, v.composed, v.painted);
  const auto gan = losses::gan_losses<float>({}, tape.value(fake).data);
  const auto l1 = losses::l1_paint(net::to_image(tape.value(v.painted)), in.target);
  const losses::LossWeights w;
  auto adv = ag::external_loss(tape, gan.gan_g, {fake}, {gan.dg_dfake});
  auto rec = ag::external_loss(tape, l1.value, {v.painted}, {l1.grad.storage()});
  tape.backward(ag::weighted_sum(tape, {adv, rec}, {float(w.lstar), float(w.lstar * w.l1)}));
  GradStore<float> g(p);
  tape.accumulate(g);
  for (const std::string name : {"seg.stem.w", "seg.head.w", "seg.fc.w", "seg.fc.b"}) {
    const auto& gi = g.grads[p.index(name)];
    const double mag = std::accumulate(gi.begin(), gi.end(), 0.0, [](double a, float x) { return a + std::abs(x); });
    EXPECT_GT(mag, 0.0) << name;
  }
}

// Identity fitting: with skips the U-Net can copy its input; without them it
// has to squeeze through the bottleneck.
double fit_identity(bool skips) {
  auto cfg = tiny();
  cfg.gen_skips = skips;
  cfg.noise_mode = net::NoiseMode::kNone;
  RandomSource rng(15);
  auto params = net::init_params<float>(cfg, rng);
  std::vector<RgbImage> images;
  for (int i = 0; i < 4; ++i) images.push_back(testing::random_image(cfg.paint_size, cfg.paint_size, rng));
  train::TrainConfig tc;
  tc.net = cfg;
  train::AdamState adam;
  adam.reset(params);
  auto loss_of = [&](bool update) {
    GradStore<float> g(params);
    double total = 0;
    for (const auto& im : images) {
      ag::Tape<float> tape(update);
      auto out = net::generator_on_tape(tape, params, cfg, tape.constant(net::to_tensor(im)), net::NoiseState::off());
      const auto l1 = losses::l1_paint(net::to_image(tape.value(out)), im);
      total += l1.value;
      if (update) {
        tape.backward(ag::external_loss(tape, l1.value, {out}, {l1.grad.storage()}));
        tape.accumulate(g);
      }
    }
    if (update) train::adam_step(params, g, adam, net::Part::kGenerator, 3e-3, tc);
    return total / images.size();
  };
  for (int step = 0; step < 150; ++step) loss_of(true);
  return loss_of(false);
}

TEST(NetArch, SkipConnectionsHelpIdentityFitting) {
  const double with = fit_identity(true), without = fit_identity(false);
  EXPECT_LT(with, without);
}

}  // namespace
}  // namespace segpaint
