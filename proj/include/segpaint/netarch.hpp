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

#include "json.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "segpaint/autograd.hpp"
#include "segpaint/error.hpp"
#include "segpaint/image.hpp"
#include "segpaint/rng.hpp"
#include "segpaint/tensor.hpp"

// The three networks: segmentor (image + visible mask -> amodal mask),
// U-Net generator (composed input -> painted object) and conditional
// patch discriminator.
namespace segpaint::net {

// How the generator's stochastic input enters the network.
enum class NoiseMode { kNone, kDropout, kChannel };

NLOHMANN_JSON_SERIALIZE_ENUM(NoiseMode, {{NoiseMode::kNone, "none"},
                                         {NoiseMode::kDropout, "dropout"},
                                         {NoiseMode::kChannel, "channel"}})

struct NetConfig {
  int input_size = 128;  // segmentor input resolution (square)
  int roi_grid = 14;     // ROI pooling output is roi_grid x roi_grid
  int mask_size = 32;    // o is mask_size x mask_size
  int paint_size = 64;   // generator input/output resolution
  int backbone_width = 16;
  int backbone_blocks = 1;  // residual blocks after the stem
  int backbone_stride = 2;
  int stem_kernel = 3;
  int gen_depth = 4;  // number of stride-2 encoder levels
  int gen_base_width = 16;
  int gen_max_width = 64;
  bool gen_skips = true;
  int disc_layers = 4;
  int disc_base_width = 16;
  NoiseMode noise_mode = NoiseMode::kDropout;
  double dropout_rate = 0.5;

  // Full-resolution sizes (500 input, 58 mask, 256 paint).
  static NetConfig full_scale() {
    NetConfig c;
    c.input_size = 500;
    c.mask_size = 58;
    c.paint_size = 256;
    c.backbone_width = 64;
    c.backbone_blocks = 4;
    c.gen_depth = 8;
    c.gen_base_width = 64;
    c.gen_max_width = 512;
    c.disc_base_width = 64;
    return c;
  }

  int feature_size() const { return conv_out(input_size, stem_spec()); }
  ag::ConvSpec stem_spec() const { return {stem_kernel, backbone_stride, stem_kernel / 2}; }
  int score_size() const { return paint_size >> (disc_layers - 1); }
  int gen_width(int level) const {  // channels of encoder level >= 1
    return std::min(gen_base_width << (level - 1), gen_max_width);
  }
  int disc_width(int layer) const { return std::min(disc_base_width << (layer - 1), disc_base_width * 8); }
  int gen_input_channels() const { return noise_mode == NoiseMode::kChannel ? 4 : 3; }

  void validate() const {
    auto bad = [](const std::string& m) { throw ConfigError("NetConfig: " + m); };
    if (input_size < 8 || roi_grid < 1 || mask_size < 2 || paint_size < 8) bad("sizes out of range");
    if (backbone_width < 1 || backbone_blocks < 0 || backbone_stride < 1 || stem_kernel < 1 || stem_kernel % 2 == 0)
      bad("invalid backbone knobs");
    if (gen_depth < 1 || gen_base_width < 1 || gen_max_width < gen_base_width) bad("invalid generator knobs");
    if (paint_size % (1 << gen_depth) != 0) bad("paint_size must be divisible by 2^gen_depth");
    if (disc_layers < 2 || disc_base_width < 1) bad("invalid discriminator knobs");
    if (paint_size % (1 << (disc_layers - 1)) != 0) bad("paint_size must be divisible by 2^(disc_layers-1)");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) bad("dropout_rate must be in [0,1)");
    if (feature_size() < 1) bad("backbone produces an empty feature map");
  }

  friend bool operator==(const NetConfig&, const NetConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(NetConfig, input_size, roi_grid, mask_size, paint_size,
                                                backbone_width, backbone_blocks, backbone_stride, stem_kernel,
                                                gen_depth, gen_base_width, gen_max_width, gen_skips, disc_layers,
                                                disc_base_width, noise_mode, dropout_rate)

enum class Part { kSegmentor, kGenerator, kDiscriminator };

inline Part part_of(const std::string& name) {
  if (name.rfind("seg.", 0) == 0) return Part::kSegmentor;
  if (name.rfind("gen.", 0) == 0) return Part::kGenerator;
  if (name.rfind("disc.", 0) == 0) return Part::kDiscriminator;
  throw Error("part_of: unrecognised parameter name " + name);
}

template <typename T>
using NetParams = ParamStore<T>;

namespace detail {

template <typename T>
void add_conv(NetParams<T>& p, const std::string& name, int cin, int cout, int k) {
  p.add(name + ".w", {cout, cin, k * k});
  p.add(name + ".b", {cout});
}

template <typename T>
void fill_normal(Tensor<T>& t, double stddev, RandomSource& rng) {
  for (auto& v : t.data) v = static_cast<T>(rng.normal() * stddev);
}

}  // namespace detail

// Declares every parameter with its shape (all zero).
template <typename T>
NetParams<T> declare_params(const NetConfig& cfg) {
  cfg.validate();
  NetParams<T> p;
  const int bw = cfg.backbone_width;
  detail::add_conv(p, "seg.stem", 4, bw, cfg.stem_kernel);
  for (int b = 0; b < cfg.backbone_blocks; ++b) {
    detail::add_conv(p, "seg.block" + std::to_string(b) + ".conv1", bw, bw, 3);
    detail::add_conv(p, "seg.block" + std::to_string(b) + ".conv2", bw, bw, 3);
  }
  detail::add_conv(p, "seg.head", bw, 1, 1);
  p.add("seg.fc.w", {cfg.mask_size * cfg.mask_size, cfg.roi_grid * cfg.roi_grid});
  p.add("seg.fc.b", {cfg.mask_size * cfg.mask_size});

  int prev = cfg.gen_input_channels();
  for (int l = 1; l <= cfg.gen_depth; ++l) {
    detail::add_conv(p, "gen.enc" + std::to_string(l), prev, cfg.gen_width(l), 4);
    prev = cfg.gen_width(l);
  }
  for (int l = cfg.gen_depth - 1; l >= 0; --l) {
    const int skip = l == 0 ? cfg.gen_input_channels() : cfg.gen_width(l);
    const int out = l == 0 ? 3 : cfg.gen_width(l);
    detail::add_conv(p, "gen.dec" + std::to_string(l), prev + skip, out, 3);
    prev = out;
  }

  prev = 6;
  for (int i = 1; i < cfg.disc_layers; ++i) {
    detail::add_conv(p, "disc.conv" + std::to_string(i), prev, cfg.disc_width(i), 4);
    prev = cfg.disc_width(i);
  }
  detail::add_conv(p, "disc.conv" + std::to_string(cfg.disc_layers), prev, 1, 3);
  return p;
}

// Seeded random initialisation: He-normal convolutions, small output layers,
// zero biases.
template <typename T>
NetParams<T> init_params(const NetConfig& cfg, RandomSource& rng) {
  NetParams<T> p = declare_params<T>(cfg);
  for (auto& e : p) {
    const std::string& n = e.name;
    if (n.size() > 2 && n.substr(n.size() - 2) == ".b") continue;
    const double fan_in = static_cast<double>(e.value.h) * e.value.w;
    double stddev = std::sqrt(2.0 / fan_in);
    if (n == "seg.fc.w") stddev = 0.5 / std::sqrt(fan_in);
    if (n.find(".conv2.w") != std::string::npos) stddev *= 0.1;
    if (n == "gen.dec0.w" || n == "disc.conv" + std::to_string(cfg.disc_layers) + ".w") stddev = 0.02;
    detail::fill_normal(e.value, stddev, rng);
  }
  return p;
}

// Generator stochasticity for one forward pass. Inactive means deterministic
// inference: no dropout and an all-zero noise channel.
struct NoiseState {
  bool active = false;
  RandomSource* rng = nullptr;

  static NoiseState off() { return {}; }
  static NoiseState on(RandomSource& r) { return {true, &r}; }
};

template <typename T>
Tensor<T> to_tensor(const ImageT<T>& img) {
  Tensor<T> t(3, img.height(), img.width());
  t.data.assign(img.storage().begin(), img.storage().end());
  return t;
}

template <typename T>
Tensor<T> to_tensor(const MaskT<T>& m) {
  Tensor<T> t(1, m.height(), m.width());
  t.data.assign(m.storage().begin(), m.storage().end());
  return t;
}

template <typename T>
ImageT<T> to_image(const Tensor<T>& t) {
  if (t.c != 3) throw ShapeError("to_image: tensor is not 3-channel");
  ImageT<T> img(t.h, t.w);
  img.storage().assign(t.data.begin(), t.data.end());
  return img;
}

template <typename T>
MaskT<T> to_mask(const Tensor<T>& t) {
  if (t.c != 1) throw ShapeError("to_mask: tensor is not single-channel");
  MaskT<T> m(t.h, t.w);
  m.storage().assign(t.data.begin(), t.data.end());
  return m;
}

// Four-channel segmentor input: RGB followed by the visible mask.
template <typename T>
Tensor<T> stack_input(const ImageT<T>& image, const MaskT<T>& sv) {
  require_shape(image.same_shape(sv), "stack_input: image and mask sizes differ");
  Tensor<T> t(4, image.height(), image.width());
  std::copy(image.storage().begin(), image.storage().end(), t.data.begin());
  std::copy(sv.storage().begin(), sv.storage().end(), t.data.begin() + image.storage().size());
  return t;
}

template <typename T>
struct SegmentorVars {
  ag::Var features;  // single-channel backbone map
  ag::Var o;         // mask_size x mask_size, post-sigmoid
  ag::Var upsampled; // paint_size x paint_size bilinear upsample of o
};

namespace detail {

template <typename T>
ag::Var conv(ag::Tape<T>& tape, const NetParams<T>& p, const std::string& name, ag::Var x, ag::ConvSpec s) {
  return ag::conv2d(tape, x, tape.parameter(p, name + ".w"), tape.parameter(p, name + ".b"), s);
}

}  // namespace detail

// Backbone only: (4 x input x input) -> (1 x F x F).
template <typename T>
ag::Var backbone_on_tape(ag::Tape<T>& tape, const NetParams<T>& p, const NetConfig& cfg, ag::Var input) {
  const auto& iv = tape.value(input);
  if (iv.c != 4 || iv.h != cfg.input_size || iv.w != cfg.input_size)
    throw ShapeError("segmentor: input must be 4 x input_size x input_size");
  ag::Var h = ag::relu(tape, detail::conv(tape, p, "seg.stem", input, cfg.stem_spec()));
  for (int b = 0; b < cfg.backbone_blocks; ++b) {
    const std::string n = "seg.block" + std::to_string(b);
    ag::Var r = ag::relu(tape, detail::conv(tape, p, n + ".conv1", h, {3, 1, 1}));
    r = detail::conv(tape, p, n + ".conv2", r, {3, 1, 1});
    h = ag::relu(tape, ag::add(tape, h, r));
  }
  return detail::conv(tape, p, "seg.head", h, {1, 1, 0});
}

// Segmentor on the tape. `box` is the expanded object box in input-image
// coordinates.
template <typename T>
SegmentorVars<T> segmentor_on_tape(ag::Tape<T>& tape, const NetParams<T>& p, const NetConfig& cfg, ag::Var input,
                                   const BoxF& box) {
  const double n = cfg.input_size;
  if (!(box.x1 > box.x0 && box.y1 > box.y0) || box.x0 < 0 || box.y0 < 0 || box.x1 > n || box.y1 > n)
    throw Error("segmentor: box outside image");
  SegmentorVars<T> out;
  out.features = backbone_on_tape(tape, p, cfg, input);
  const double scale = static_cast<double>(cfg.feature_size()) / n;
  ag::Var pooled = ag::roi_max_pool(tape, out.features, box.scaled(scale, scale), cfg.roi_grid);
  ag::Var logits = ag::linear(tape, pooled, tape.parameter(p, "seg.fc.w"), tape.parameter(p, "seg.fc.b"));
  logits = ag::reshape(tape, logits, 1, cfg.mask_size, cfg.mask_size);
  out.o = ag::sigmoid(tape, logits);
  ag::ensure_finite(tape, out.o, "segmentor");
  out.upsampled = ag::resize_bilinear(tape, out.o, cfg.paint_size, cfg.paint_size);
  return out;
}

// U-Net generator on the tape: (3 x P x P) -> (3 x P x P) in [0, 1].
template <typename T>
ag::Var generator_on_tape(ag::Tape<T>& tape, const NetParams<T>& p, const NetConfig& cfg, ag::Var m_input,
                          const NoiseState& noise) {
  const auto& mv = tape.value(m_input);
  if (mv.c != 3 || mv.h != cfg.paint_size || mv.w != cfg.paint_size)
    throw ShapeError("generator: input must be 3 x paint_size x paint_size");
  const bool stochastic = noise.active && noise.rng != nullptr;
  ag::Var x = m_input;
  if (cfg.noise_mode == NoiseMode::kChannel) {
    Tensor<T> z(1, cfg.paint_size, cfg.paint_size);
    if (stochastic)
      for (auto& v : z.data) v = static_cast<T>(noise.rng->normal());
    x = ag::concat(tape, x, tape.constant(std::move(z)));
  }
  std::vector<ag::Var> enc{x};
  for (int l = 1; l <= cfg.gen_depth; ++l)
    enc.push_back(ag::leaky_relu(tape, detail::conv(tape, p, "gen.enc" + std::to_string(l), enc.back(), {4, 2, 1}),
                                 T(0.2)));
  x = enc.back();
  for (int l = cfg.gen_depth - 1; l >= 0; --l) {
    ag::Var up = ag::upsample_nearest2x(tape, x);
    ag::Var skip = enc[l];
    if (!cfg.gen_skips) {
      const auto& sv = tape.value(skip);
      skip = tape.constant(Tensor<T>(sv.c, sv.h, sv.w));
    }
    x = detail::conv(tape, p, "gen.dec" + std::to_string(l), ag::concat(tape, up, skip), {3, 1, 1});
    if (l == 0) {
      x = ag::sigmoid(tape, x);
    } else {
      x = ag::relu(tape, x);
      if (stochastic && cfg.noise_mode == NoiseMode::kDropout && l >= std::max(1, cfg.gen_depth - 2))
        x = ag::dropout(tape, x, cfg.dropout_rate, *noise.rng);
    }
  }
  ag::ensure_finite(tape, x, "generator");
  return x;
}

// Conditional patch discriminator: realness score grid in (0, 1).
template <typename T>
ag::Var discriminator_on_tape(ag::Tape<T>& tape, const NetParams<T>& p, const NetConfig& cfg, ag::Var cond,
                              ag::Var judged) {
  const auto& cv = tape.value(cond);
  const auto& jv = tape.value(judged);
  if (!cv.same_shape(jv) || cv.c != 3 || cv.h != cfg.paint_size || cv.w != cfg.paint_size)
    throw ShapeError("discriminator: inputs must both be 3 x paint_size x paint_size");
  ag::Var x = ag::concat(tape, cond, judged);
  for (int i = 1; i < cfg.disc_layers; ++i)
    x = ag::leaky_relu(tape, detail::conv(tape, p, "disc.conv" + std::to_string(i), x, {4, 2, 1}), T(0.2));
  x = detail::conv(tape, p, "disc.conv" + std::to_string(cfg.disc_layers), x, {3, 1, 1});
  x = ag::sigmoid(tape, x);
  ag::ensure_finite(tape, x, "discriminator");
  return x;
}

template <typename T>
struct SegmentorOutput {
  MaskT<T> o;          // mask_size x mask_size, values in (0, 1)
  MaskT<T> upsampled;  // paint_size x paint_size
};

// Inference wrappers (no gradient bookkeeping).
template <typename T>
SegmentorOutput<T> segmentor_forward(const NetParams<T>& p, const NetConfig& cfg, const ImageT<T>& image,
                                     const MaskT<T>& sv, const BoxF& box) {
  ag::Tape<T> tape(false);
  auto vars = segmentor_on_tape(tape, p, cfg, tape.constant(stack_input(image, sv)), box);
  return {to_mask(tape.value(vars.o)), to_mask(tape.value(vars.upsampled))};
}

template <typename T>
ImageT<T> generator_forward(const NetParams<T>& p, const NetConfig& cfg, const ImageT<T>& m_input,
                            const NoiseState& noise = NoiseState::off()) {
  ag::Tape<T> tape(false);
  return to_image(tape.value(generator_on_tape(tape, p, cfg, tape.constant(to_tensor(m_input)), noise)));
}

template <typename T>
MaskT<T> discriminator_forward(const NetParams<T>& p, const NetConfig& cfg, const ImageT<T>& cond,
                               const ImageT<T>& judged) {
  ag::Tape<T> tape(false);
  auto s = discriminator_on_tape(tape, p, cfg, tape.constant(to_tensor(cond)), tape.constant(to_tensor(judged)));
  return to_mask(tape.value(s));
}

template <typename T>
bool all_finite(const NetParams<T>& p) {
  for (const auto& e : p)
    for (T v : e.value.data)
      if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace segpaint::net
