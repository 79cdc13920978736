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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "segpaint/error.hpp"
#include "segpaint/image.hpp"
#include "segpaint/maskops.hpp"
#include "segpaint/raster.hpp"
#include "segpaint/rng.hpp"

// Procedural layered 2-D scenes with exact visible / invisible / full masks.
// Each object is rendered alone and compared against the full composite; the
// pixels that agree are the visible ones.
namespace segpaint {

inline void to_json(nlohmann::json& j, const BBox& b) { j = {b.x0, b.y0, b.x1, b.y1}; }
inline void from_json(const nlohmann::json& j, BBox& b) {
  b = {j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>(), j.at(3).get<int>()};
}

}  // namespace segpaint

namespace segpaint::scene {

inline constexpr long kMinVisiblePixels = 10;

enum class Shape { kRectangle, kEllipse, kPolygon };
enum class Texture { kSolid, kStripes, kChecker };

NLOHMANN_JSON_SERIALIZE_ENUM(Shape, {{Shape::kRectangle, "rectangle"},
                                     {Shape::kEllipse, "ellipse"},
                                     {Shape::kPolygon, "polygon"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Texture, {{Texture::kSolid, "solid"},
                                       {Texture::kStripes, "stripes"},
                                       {Texture::kChecker, "checker"}})

struct Color {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Color&, const Color&) = default;
};

inline void to_json(nlohmann::json& j, const Color& c) { j = {c.r, c.g, c.b}; }
inline void from_json(const nlohmann::json& j, Color& c) {
  c.r = j.at(0).get<std::uint8_t>(), c.g = j.at(1).get<std::uint8_t>(), c.b = j.at(2).get<std::uint8_t>();
}

// An opaque textured shape. Geometry lives in a local frame centred at
// (cx, cy) and rotated by `angle`; `half_w`, `half_h` scale the shape.
struct Sprite {
  int id = 0;
  int depth_rank = 0;  // 0 = frontmost
  Shape shape = Shape::kRectangle;
  Texture texture = Texture::kSolid;
  Color color_a, color_b;
  double cx = 0, cy = 0, half_w = 1, half_h = 1, angle = 0;
  double texture_period = 6, texture_angle = 0;
  std::vector<std::array<double, 2>> vertices;  // polygon, unit local coords, counter-clockwise

  std::array<double, 2> local(double px, double py) const {
    const double dx = px - cx, dy = py - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * dx + s * dy, -s * dx + c * dy};
  }

  // Coverage test at a pixel centre.
  bool covers(int x, int y) const {
    const auto [lx, ly] = local(x + 0.5, y + 0.5);
    const double u = lx / half_w, v = ly / half_h;
    switch (shape) {
      case Shape::kRectangle:
        return std::abs(u) <= 1.0 && std::abs(v) <= 1.0;
      case Shape::kEllipse:
        return u * u + v * v <= 1.0;
      case Shape::kPolygon: {
        const std::size_t n = vertices.size();
        for (std::size_t i = 0; i < n; ++i) {
          const auto& a = vertices[i];
          const auto& b = vertices[(i + 1) % n];
          if ((b[0] - a[0]) * (v - a[1]) - (b[1] - a[1]) * (u - a[0]) < 0) return false;
        }
        return n >= 3;
      }
    }
    return false;
  }

  Color color_at(int x, int y) const {
    if (texture == Texture::kSolid) return color_a;
    const auto [lx, ly] = local(x + 0.5, y + 0.5);
    long parity = 0;
    if (texture == Texture::kStripes) {
      const double t = (lx * std::cos(texture_angle) + ly * std::sin(texture_angle)) / texture_period;
      parity = static_cast<long>(std::floor(t));
    } else {
      parity = static_cast<long>(std::floor(lx / texture_period)) + static_cast<long>(std::floor(ly / texture_period));
    }
    return (parity & 1) ? color_b : color_a;
  }

  friend bool operator==(const Sprite&, const Sprite&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Sprite, id, depth_rank, shape, texture, color_a, color_b, cx, cy, half_w, half_h,
                                   angle, texture_period, texture_angle, vertices)

// Vertical gray gradient from `top` to `bottom`.
struct Background {
  std::uint8_t top = 128, bottom = 128;

  Color at(int y, int height) const {
    const double t = height > 1 ? double(y) / (height - 1) : 0.0;
    const auto v = static_cast<std::uint8_t>(std::lround(top + (double(bottom) - top) * t));
    return {v, v, v};
  }
  friend bool operator==(const Background&, const Background&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Background, top, bottom)

struct LayeredScene {
  int width = 0, height = 0;
  Background background;
  std::vector<Sprite> sprites;  // indexed by id

  const Sprite* frontmost_at(int x, int y) const {
    const Sprite* best = nullptr;
    for (const auto& s : sprites)
      if ((!best || s.depth_rank < best->depth_rank) && s.covers(x, y)) best = &s;
    return best;
  }

  friend bool operator==(const LayeredScene&, const LayeredScene&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LayeredScene, width, height, background, sprites)

struct SceneConfig {
  int width = 128, height = 128;
  int min_sprites = 4, max_sprites = 8;
  double min_size = 16, max_size = 44;  // sprite extent in pixels
  long min_area = 80;                   // minimum in-canvas silhouette pixels
  double occlusion_target = 0.9;        // probability a scene is forced to contain an occlusion
  int max_attempts = 500;

  friend bool operator==(const SceneConfig&, const SceneConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SceneConfig, width, height, min_sprites, max_sprites, min_size,
                                                max_size, min_area, occlusion_target, max_attempts)

// Saturated colours only; backgrounds are gray, so no sprite pixel can ever
// equal a background pixel, and colours are never shared within a scene.
inline const std::vector<Color>& palette() {
  static const std::vector<Color> colors = [] {
    std::vector<Color> out;
    const double variants[3][2] = {{1.0, 0.95}, {0.7, 0.8}, {0.55, 1.0}};  // saturation, value
    for (const auto& sv : variants)
      for (int h = 0; h < 12; ++h) {
        const double hue = h * 30.0 + (sv[0] < 0.6 ? 15.0 : 0.0);
        const double c = sv[1] * sv[0];
        const double hp = hue / 60.0;
        const double xx = c * (1 - std::abs(std::fmod(hp, 2.0) - 1));
        double r = 0, g = 0, b = 0;
        switch (static_cast<int>(hp)) {
          case 0: r = c, g = xx; break;
          case 1: r = xx, g = c; break;
          case 2: g = c, b = xx; break;
          case 3: g = xx, b = c; break;
          case 4: r = xx, b = c; break;
          default: r = c, b = xx; break;
        }
        const double m = sv[1] - c;
        out.push_back({static_cast<std::uint8_t>(std::lround((r + m) * 255)),
                       static_cast<std::uint8_t>(std::lround((g + m) * 255)),
                       static_cast<std::uint8_t>(std::lround((b + m) * 255))});
      }
    return out;
  }();
  return colors;
}

inline long silhouette_area(const Sprite& s, int width, int height) {
  long n = 0;
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) n += s.covers(x, y);
  return n;
}

inline BinaryMask silhouette(const Sprite& s, int width, int height) {
  BinaryMask m(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) m(y, x) = s.covers(x, y) ? 1.f : 0.f;
  return m;
}

inline bool silhouettes_overlap(const Sprite& a, const Sprite& b, int width, int height) {
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      if (a.covers(x, y) && b.covers(x, y)) return true;
  return false;
}

inline bool has_occlusion(const LayeredScene& s) {
  for (std::size_t i = 0; i < s.sprites.size(); ++i)
    for (std::size_t j = i + 1; j < s.sprites.size(); ++j)
      if (silhouettes_overlap(s.sprites[i], s.sprites[j], s.width, s.height)) return true;
  return false;
}

namespace detail {

inline void put(RgbImage& img, int x, int y, Color c) {
  img(0, y, x) = c.r / 255.f, img(1, y, x) = c.g / 255.f, img(2, y, x) = c.b / 255.f;
}

inline Sprite random_sprite(const SceneConfig& cfg, RandomSource& rng) {
  Sprite s;
  s.shape = static_cast<Shape>(rng.uniform_int(0, 2));
  s.texture = static_cast<Texture>(rng.uniform_int(0, 2));
  const double extent = rng.uniform(cfg.min_size, cfg.max_size);
  s.half_w = extent / 2;
  s.half_h = std::clamp(s.half_w * rng.uniform(0.6, 1.4), cfg.min_size / 2, cfg.max_size / 2);
  s.angle = rng.uniform(0.0, std::numbers::pi);
  const double reach = 0.5 * std::max(s.half_w, s.half_h);
  s.cx = rng.uniform(reach, cfg.width - reach);
  s.cy = rng.uniform(reach, cfg.height - reach);
  s.texture_period = rng.uniform(4.0, 10.0);
  s.texture_angle = rng.uniform(0.0, std::numbers::pi);
  if (s.shape == Shape::kPolygon) {
    const int n = rng.uniform_int(3, 6);
    std::vector<double> angles;
    for (;;) {
      angles.clear();
      for (int i = 0; i < n; ++i) angles.push_back(rng.uniform(0.0, 2 * std::numbers::pi));
      std::sort(angles.begin(), angles.end());
      double max_gap = angles.front() + 2 * std::numbers::pi - angles.back();
      for (int i = 1; i < n; ++i) max_gap = std::max(max_gap, angles[i] - angles[i - 1]);
      if (max_gap < 0.8 * std::numbers::pi) break;
    }
    for (double a : angles) s.vertices.push_back({std::cos(a), std::sin(a)});
  }
  return s;
}

}  // namespace detail

// Procedurally generates a scene. Deterministic for a given rng state.
inline LayeredScene generate_scene(const SceneConfig& cfg, RandomSource& rng) {
  if (cfg.width < 8 || cfg.height < 8) throw ConfigError("SceneConfig: canvas too small");
  if (cfg.min_sprites < 1 || cfg.max_sprites < cfg.min_sprites) throw ConfigError("SceneConfig: bad sprite count range");
  if (!(cfg.min_size > 0 && cfg.max_size >= cfg.min_size)) throw ConfigError("SceneConfig: bad size range");
  if (cfg.max_size > std::min(cfg.width, cfg.height))
    throw ConfigError("SceneConfig: sprites larger than the canvas");
  if (2 * static_cast<std::size_t>(cfg.max_sprites) > palette().size())
    throw ConfigError("SceneConfig: too many sprites for the colour palette");
  if (cfg.min_area > static_cast<long>(cfg.width) * cfg.height)
    throw ConfigError("SceneConfig: min_area exceeds the canvas");

  LayeredScene scene;
  scene.width = cfg.width, scene.height = cfg.height;
  scene.background.top = static_cast<std::uint8_t>(rng.uniform_int(70, 200));
  scene.background.bottom = static_cast<std::uint8_t>(rng.uniform_int(70, 200));
  const int count = rng.uniform_int(cfg.min_sprites, cfg.max_sprites);
  const bool need_occlusion = count >= 2 && rng.bernoulli(cfg.occlusion_target);

  std::vector<int> color_order(palette().size());
  for (std::size_t i = 0; i < color_order.size(); ++i) color_order[i] = static_cast<int>(i);
  for (std::size_t i = color_order.size() - 1; i > 0; --i)
    std::swap(color_order[i], color_order[rng.uniform_int(0, static_cast<int>(i))]);

  for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
    scene.sprites.clear();
    for (int i = 0; i < count; ++i) {
      Sprite s;
      int tries = 0;
      do {
        if (++tries > cfg.max_attempts) throw ConfigError("SceneConfig: cannot satisfy min_area");
        s = detail::random_sprite(cfg, rng);
      } while (silhouette_area(s, cfg.width, cfg.height) < cfg.min_area);
      s.id = i;
      s.color_a = palette()[color_order[2 * i]];
      s.color_b = palette()[color_order[2 * i + 1]];
      scene.sprites.push_back(std::move(s));
    }
    if (!need_occlusion || has_occlusion(scene)) {
      std::vector<int> ranks(count);
      for (int i = 0; i < count; ++i) ranks[i] = i;
      for (int i = count - 1; i > 0; --i) std::swap(ranks[i], ranks[rng.uniform_int(0, i)]);
      for (int i = 0; i < count; ++i) scene.sprites[i].depth_rank = ranks[i];
      return scene;
    }
  }
  throw ConfigError("SceneConfig: could not place an occluding pair within max_attempts");
}

inline RgbImage render_background(const LayeredScene& s) {
  RgbImage img(s.height, s.width);
  for (int y = 0; y < s.height; ++y) {
    const Color c = s.background.at(y, s.height);
    for (int x = 0; x < s.width; ++x) detail::put(img, x, y, c);
  }
  return img;
}

// Painter's-algorithm composite of every sprite.
inline RgbImage render(const LayeredScene& s) {
  RgbImage img = render_background(s);
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x)
      if (const Sprite* sp = s.frontmost_at(x, y)) detail::put(img, x, y, sp->color_at(x, y));
  return img;
}

// The scene with every other object removed.
inline RgbImage render_alone(const LayeredScene& s, int id) {
  const Sprite& sp = s.sprites.at(id);
  RgbImage img = render_background(s);
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x)
      if (sp.covers(x, y)) detail::put(img, x, y, sp.color_at(x, y));
  return img;
}

// Per-pixel id of the frontmost sprite, -1 for background.
inline std::vector<int> id_buffer(const LayeredScene& s) {
  std::vector<int> ids(static_cast<std::size_t>(s.width) * s.height, -1);
  for (int y = 0; y < s.height; ++y)
    for (int x = 0; x < s.width; ++x)
      if (const Sprite* sp = s.frontmost_at(x, y)) ids[static_cast<std::size_t>(y) * s.width + x] = sp->id;
  return ids;
}

// Visible mask straight from z-order rasterization (independent of the
// render-and-compare procedure).
inline BinaryMask zorder_visible(const LayeredScene& s, int id) {
  const auto ids = id_buffer(s);
  BinaryMask m(s.height, s.width);
  for (std::size_t i = 0; i < ids.size(); ++i) m.values()[i] = ids[i] == id ? 1.f : 0.f;
  return m;
}

struct Sample {
  RgbImage image;         // full composite
  RgbImage object_image;  // object rendered alone over the background
  int object_id = 0;
  int depth_rank = 0;
  BinaryMask sv, si, sf;
  BBox bbox;                   // tight box of sf
  std::vector<int> occluders;  // ids of objects visible over this object's invisible region
};

struct DeriveOptions {
  // Per-channel tolerance (in [0,1] units) for the render-alone comparison;
  // 0 means exact equality.
  float tolerance = 0.f;
};

// Ground-truth masks for every object with at least kMinVisiblePixels
// visible pixels, in id order.
inline std::vector<Sample> derive_masks(const LayeredScene& s, const DeriveOptions& opt = {}) {
  const RgbImage composite = render(s);
  const auto ids = id_buffer(s);
  std::vector<Sample> out;
  for (const Sprite& sp : s.sprites) {
    Sample smp;
    smp.object_id = sp.id;
    smp.depth_rank = sp.depth_rank;
    smp.object_image = render_alone(s, sp.id);
    smp.sf = silhouette(sp, s.width, s.height);
    smp.sv = BinaryMask(s.height, s.width);
    for (int y = 0; y < s.height; ++y)
      for (int x = 0; x < s.width; ++x) {
        if (smp.sf(y, x) < 0.5f) continue;
        bool same = true;
        for (int c = 0; c < 3; ++c) same = same && std::abs(smp.object_image(c, y, x) - composite(c, y, x)) <= opt.tolerance;
        smp.sv(y, x) = same ? 1.f : 0.f;
      }
    if (maskops::count(smp.sv) < kMinVisiblePixels) continue;
    smp.si = maskops::invisible_mask(smp.sf, smp.sv);
    smp.image = composite;
    smp.bbox = *maskops::bbox_of(smp.sf);
    std::set<int> occ;
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (smp.si.values()[i] >= 0.5f && ids[i] >= 0) occ.insert(ids[i]);
    smp.occluders.assign(occ.begin(), occ.end());
    out.push_back(std::move(smp));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset persistence.

inline constexpr int kManifestVersion = 1;
inline constexpr const char* kManifestFormat = "segpaint-dataset";

struct DatasetConfig {
  SceneConfig scene;
  int train_scenes = 20;
  int test_scenes = 8;
  std::uint64_t train_seed = 1000;  // scene i of the train split uses train_seed + i
  std::uint64_t test_seed = 900000;

  friend bool operator==(const DatasetConfig&, const DatasetConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DatasetConfig, scene, train_scenes, test_scenes, train_seed, test_seed)

struct SceneRecord {
  std::string split;
  int index = 0;
  std::uint64_t seed = 0;
  std::string image;
  LayeredScene scene;
};

struct SampleRecord {
  int scene = 0;  // index into DatasetManifest::scenes
  int object_id = 0;
  int depth_rank = 0;
  std::string sv, si, sf, target;
  BBox bbox;
  std::vector<int> occluders;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SceneRecord, split, index, seed, image, scene)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SampleRecord, scene, object_id, depth_rank, sv, si, sf, target, bbox, occluders)

struct DatasetManifest {
  std::filesystem::path root;  // directory holding the manifest; record paths are relative to it
  int width = 0, height = 0;
  DatasetConfig config;
  std::vector<SceneRecord> scenes;
  std::vector<SampleRecord> samples;

  // Sample indices of one split.
  std::vector<int> split_indices(const std::string& split) const {
    std::vector<int> out;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (scenes.at(samples[i].scene).split == split) out.push_back(static_cast<int>(i));
    return out;
  }
};

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  return {{"format", kManifestFormat}, {"version", kManifestVersion},
          {"canvas", {{"width", m.width}, {"height", m.height}}},
          {"config", m.config},           {"scenes", m.scenes},
          {"samples", m.samples}};
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << manifest_to_json(m).dump(1) << '\n';
  if (!os) throw IoError("write failed for " + path.string());
}

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("corrupt manifest " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != kManifestFormat) throw IoError("not a dataset manifest: " + path.string());
  if (j.value("version", -1) != kManifestVersion)
    throw IoError("unsupported manifest version in " + path.string());
  DatasetManifest m;
  try {
    m.root = path.parent_path();
    m.width = j.at("canvas").at("width").get<int>();
    m.height = j.at("canvas").at("height").get<int>();
    m.config = j.at("config").get<DatasetConfig>();
    m.scenes = j.at("scenes").get<std::vector<SceneRecord>>();
    m.samples = j.at("samples").get<std::vector<SampleRecord>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest " + path.string() + ": " + e.what());
  }
  for (const auto& s : m.samples)
    if (s.scene < 0 || s.scene >= static_cast<int>(m.scenes.size()))
      throw IoError("manifest sample refers to unknown scene in " + path.string());
  return m;
}

inline std::string scene_dir(const std::string& split, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%04d", index);
  return split + "/" + buf;
}

// Generates both splits under `out_dir` and writes `out_dir/manifest.json`.
inline DatasetManifest build_dataset(const DatasetConfig& cfg, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  if (cfg.train_scenes < 0 || cfg.test_scenes < 0) throw ConfigError("DatasetConfig: negative scene count");
  std::set<std::uint64_t> train_seeds;
  for (int i = 0; i < cfg.train_scenes; ++i) train_seeds.insert(cfg.train_seed + i);
  for (int i = 0; i < cfg.test_scenes; ++i)
    if (train_seeds.count(cfg.test_seed + i))
      throw ConfigError("DatasetConfig: train and test splits share scene seed " + std::to_string(cfg.test_seed + i));

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  DatasetManifest m;
  m.root = out_dir;
  m.width = cfg.scene.width, m.height = cfg.scene.height;
  m.config = cfg;
  auto emit_split = [&](const std::string& split, int count, std::uint64_t base) {
    for (int i = 0; i < count; ++i) {
      const std::uint64_t seed = base + static_cast<std::uint64_t>(i);
      RandomSource rng(seed);
      SceneRecord rec{split, i, seed, "", generate_scene(cfg.scene, rng)};
      const std::string dir = scene_dir(split, i);
      fs::create_directories(out_dir / dir, ec);
      if (ec) throw IoError("cannot create " + (out_dir / dir).string() + ": " + ec.message());
      rec.image = dir + "/image.png";
      raster::write_image(out_dir / rec.image, render(rec.scene));
      const int scene_index = static_cast<int>(m.scenes.size());
      for (const Sample& s : derive_masks(rec.scene)) {
        char obj[16];
        std::snprintf(obj, sizeof obj, "obj_%02d", s.object_id);
        const std::string stem = dir + "/" + obj;
        SampleRecord sr{scene_index, s.object_id, s.depth_rank, stem + "_sv.png", stem + "_si.png", stem + "_sf.png",
                        stem + "_target.png", s.bbox, s.occluders};
        raster::write_mask(out_dir / sr.sv, s.sv);
        raster::write_mask(out_dir / sr.si, s.si);
        raster::write_mask(out_dir / sr.sf, s.sf);
        raster::write_image(out_dir / sr.target, s.object_image);
        m.samples.push_back(std::move(sr));
      }
      m.scenes.push_back(std::move(rec));
    }
  };
  emit_split("train", cfg.train_scenes, cfg.train_seed);
  emit_split("test", cfg.test_scenes, cfg.test_seed);
  save_manifest(m, out_dir / "manifest.json");
  return m;
}

// Decodes one sample and re-checks its mask invariants.
inline Sample load_sample(const DatasetManifest& m, int index) {
  if (index < 0 || index >= static_cast<int>(m.samples.size()))
    throw Error("load_sample: index " + std::to_string(index) + " out of range");
  const SampleRecord& r = m.samples[index];
  const SceneRecord& sc = m.scenes.at(r.scene);
  Sample s;
  s.object_id = r.object_id;
  s.depth_rank = r.depth_rank;
  s.bbox = r.bbox;
  s.occluders = r.occluders;
  s.image = raster::read_image(m.root / sc.image);
  s.object_image = raster::read_image(m.root / r.target);
  s.sv = raster::read_mask(m.root / r.sv);
  s.si = raster::read_mask(m.root / r.si);
  s.sf = raster::read_mask(m.root / r.sf);
  for (const BinaryMask* mk : {&s.sv, &s.si, &s.sf})
    if (!s.image.same_shape(*mk)) throw IoError("load_sample: mask size differs from image for " + r.sv);
  if (!s.image.same_shape(s.object_image)) throw IoError("load_sample: target size differs for " + r.target);
  for (std::size_t i = 0; i < s.sf.size(); ++i) {
    const bool v = s.sv.values()[i] >= 0.5f, in = s.si.values()[i] >= 0.5f, f = s.sf.values()[i] >= 0.5f;
    if ((v && in) || ((v || in) != f))
      throw Error("load_sample: mask invariant violated (sv/si/sf) in " + (m.root / r.sv).string());
  }
  return s;
}

}  // namespace segpaint::scene
