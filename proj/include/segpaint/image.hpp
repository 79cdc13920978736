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
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "segpaint/error.hpp"

namespace segpaint {

// Single-channel H x W grid of reals in [0, 1]. Holds visible, invisible,
// full-object and predicted masks. A "hard" mask has values in {0, 1}.
template <typename T>
class MaskT {
 public:
  MaskT() = default;
  MaskT(int height, int width, T fill = T(0))
      : height_(height), width_(width),
        data_(static_cast<std::size_t>(checked(height, width)), fill) {}

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  T operator()(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  bool same_shape(const MaskT& o) const { return height_ == o.height_ && width_ == o.width_; }

  template <typename U>
  MaskT<U> cast() const {
    MaskT<U> out(height_, width_);
    std::transform(data_.begin(), data_.end(), out.values().begin(),
                   [](T v) { return static_cast<U>(v); });
    return out;
  }

  friend bool operator==(const MaskT&, const MaskT&) = default;

 private:
  static long checked(int h, int w) {
    if (h < 0 || w < 0) throw ShapeError("negative mask dimensions");
    return static_cast<long>(h) * w;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

// Three-channel image, planar layout (channel-major), values in [0, 1].
template <typename T>
class ImageT {
 public:
  static constexpr int kChannels = 3;

  ImageT() = default;
  ImageT(int height, int width, T fill = T(0))
      : height_(height), width_(width),
        data_(static_cast<std::size_t>(kChannels) * height * width, fill) {
    if (height < 0 || width < 0) throw ShapeError("negative image dimensions");
  }

  // Constant colour image.
  static ImageT filled(int height, int width, T r, T g, T b) {
    ImageT img(height, width);
    const std::size_t plane = img.plane_size();
    std::fill_n(img.data_.begin(), plane, r);
    std::fill_n(img.data_.begin() + plane, plane, g);
    std::fill_n(img.data_.begin() + 2 * plane, plane, b);
    return img;
  }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(height_) * width_; }

  T& operator()(int c, int y, int x) { return data_[c * plane_size() + static_cast<std::size_t>(y) * width_ + x]; }
  T operator()(int c, int y, int x) const { return data_[c * plane_size() + static_cast<std::size_t>(y) * width_ + x]; }

  std::span<T> channel(int c) { return std::span<T>(data_).subspan(c * plane_size(), plane_size()); }
  std::span<const T> channel(int c) const { return std::span<const T>(data_).subspan(c * plane_size(), plane_size()); }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  template <typename M>
  bool same_shape(const M& o) const { return height_ == o.height() && width_ == o.width(); }

  friend bool operator==(const ImageT&, const ImageT&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

using BinaryMask = MaskT<float>;
using RgbImage = ImageT<float>;

// Half-open integer pixel box [x0, x1) x [y0, y1).
struct BBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  int width() const { return x1 - x0; }
  int height() const { return y1 - y0; }
  long area() const { return width() > 0 && height() > 0 ? static_cast<long>(width()) * height() : 0; }
  bool degenerate() const { return x1 <= x0 || y1 <= y0; }
  bool contains(const BBox& o) const { return x0 <= o.x0 && y0 <= o.y0 && x1 >= o.x1 && y1 >= o.y1; }
  bool within(int width_bound, int height_bound) const {
    return x0 >= 0 && y0 >= 0 && x1 <= width_bound && y1 <= height_bound && !degenerate();
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

// Real-valued box, used where boxes are rescaled between frames.
struct BoxF {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

  static BoxF from(const BBox& b) { return {double(b.x0), double(b.y0), double(b.x1), double(b.y1)}; }
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  BoxF scaled(double sx, double sy) const { return {x0 * sx, y0 * sy, x1 * sx, y1 * sy}; }
};

inline std::string to_string(const BBox& b) {
  return "(" + std::to_string(b.x0) + "," + std::to_string(b.y0) + "," + std::to_string(b.x1) + "," +
         std::to_string(b.y1) + ")";
}

}  // namespace segpaint
