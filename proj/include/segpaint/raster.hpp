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

#include <png.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "segpaint/error.hpp"
#include "segpaint/image.hpp"

// Lossless 8-bit PNG I/O. Masks are single-channel 0/255 files; images are
// 8-bit RGB. Values are quantised with round(v * 255).
namespace segpaint::raster {

inline std::uint8_t quantize(float v) {
  const float c = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
  return static_cast<std::uint8_t>(std::lround(c * 255.f));
}

inline float dequantize(std::uint8_t b) { return static_cast<float>(b) / 255.f; }

namespace detail {

inline void write_png(const std::filesystem::path& path, int width, int height, png_uint_32 format,
                      const std::vector<std::uint8_t>& buffer) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = format;
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, buffer.data(), 0, nullptr))
    throw IoError("cannot write " + path.string() + ": " + img.message);
}

inline std::vector<std::uint8_t> read_png(const std::filesystem::path& path, png_uint_32 format, int& width,
                                          int& height) {
  if (!std::filesystem::exists(path)) throw IoError("missing file " + path.string());
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str()))
    throw IoError("corrupt image " + path.string() + ": " + img.message);
  img.format = format;
  std::vector<std::uint8_t> buffer(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buffer.data(), 0, nullptr)) {
    png_image_free(&img);
    throw IoError("corrupt image " + path.string() + ": " + img.message);
  }
  width = static_cast<int>(img.width);
  height = static_cast<int>(img.height);
  return buffer;
}

}  // namespace detail

// Writes a mask binarized at 0.5 as 0/255.
inline void write_mask(const std::filesystem::path& path, const BinaryMask& m) {
  std::vector<std::uint8_t> buf(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) buf[i] = m.values()[i] >= 0.5f ? 255 : 0;
  detail::write_png(path, m.width(), m.height(), PNG_FORMAT_GRAY, buf);
}

// Writes a soft mask with 8-bit quantisation (for visualisation).
inline void write_gray(const std::filesystem::path& path, const BinaryMask& m) {
  std::vector<std::uint8_t> buf(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) buf[i] = quantize(m.values()[i]);
  detail::write_png(path, m.width(), m.height(), PNG_FORMAT_GRAY, buf);
}

// Reads a grayscale (or colour, converted) file as a mask in [0, 1].
inline BinaryMask read_mask(const std::filesystem::path& path) {
  int w = 0, h = 0;
  auto buf = detail::read_png(path, PNG_FORMAT_GRAY, w, h);
  BinaryMask m(h, w);
  for (std::size_t i = 0; i < m.size(); ++i) m.values()[i] = dequantize(buf[i]);
  return m;
}

inline void write_image(const std::filesystem::path& path, const RgbImage& img) {
  const std::size_t n = img.plane_size();
  std::vector<std::uint8_t> buf(3 * n);
  for (int c = 0; c < 3; ++c) {
    auto ch = img.channel(c);
    for (std::size_t i = 0; i < n; ++i) buf[3 * i + c] = quantize(ch[i]);
  }
  detail::write_png(path, img.width(), img.height(), PNG_FORMAT_RGB, buf);
}

inline RgbImage read_image(const std::filesystem::path& path) {
  int w = 0, h = 0;
  auto buf = detail::read_png(path, PNG_FORMAT_RGB, w, h);
  RgbImage img(h, w);
  const std::size_t n = img.plane_size();
  for (int c = 0; c < 3; ++c) {
    auto ch = img.channel(c);
    for (std::size_t i = 0; i < n; ++i) ch[i] = dequantize(buf[3 * i + c]);
  }
  return img;
}

}  // namespace segpaint::raster
