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
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "segpaint/error.hpp"

namespace segpaint {

// Storage handed to Eigen. Vectorised reductions peel leading elements by
// pointer alignment, so a fixed alignment keeps results bit-reproducible
// from run to run.
template <typename T>
using Buffer = std::vector<T, Eigen::aligned_allocator<T>>;

// Dense channel-major (C x H x W) activation tensor for a single example.
template <typename T>
struct Tensor {
  int c = 0, h = 0, w = 0;
  Buffer<T> data;

  Tensor() = default;
  Tensor(int channels, int height, int width, T fill = T(0))
      : c(channels), h(height), w(width), data(static_cast<std::size_t>(channels) * height * width, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  bool empty() const { return data.empty(); }
  bool same_shape(const Tensor& o) const { return c == o.c && h == o.h && w == o.w; }

  T& operator()(int ch, int y, int x) { return data[ch * plane() + static_cast<std::size_t>(y) * w + x]; }
  T operator()(int ch, int y, int x) const { return data[ch * plane() + static_cast<std::size_t>(y) * w + x]; }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

// Named, ordered collection of parameter arrays. The order is the insertion
// order and defines the checkpoint layout.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    std::vector<int> shape;  // at most 3 dims, stored as a Tensor
    Tensor<T> value;
  };

  int add(const std::string& name, std::vector<int> shape) {
    if (index_.count(name)) throw Error("ParamStore: duplicate parameter " + name);
    if (shape.empty() || shape.size() > 3) throw Error("ParamStore: bad rank for " + name);
    std::vector<int> dims = shape;
    while (dims.size() < 3) dims.push_back(1);
    entries_.push_back({name, std::move(shape), Tensor<T>(dims[0], dims[1], dims[2])});
    index_[name] = static_cast<int>(entries_.size()) - 1;
    return static_cast<int>(entries_.size()) - 1;
  }

  int index(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("ParamStore: unknown parameter " + name);
    return it->second;
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::size_t size() const { return entries_.size(); }
  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  Tensor<T>& value(const std::string& name) { return entries_[index(name)].value; }
  const Tensor<T>& value(const std::string& name) const { return entries_[index(name)].value; }

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  std::size_t scalar_count() const {
    return std::accumulate(entries_.begin(), entries_.end(), std::size_t{0},
                           [](std::size_t a, const Entry& e) { return a + e.value.size(); });
  }

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      const auto& x = a.entries_[i];
      const auto& y = b.entries_[i];
      if (x.name != y.name || x.shape != y.shape || x.value != y.value) return false;
    }
    return true;
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, int> index_;
};

// Gradient buffers aligned with a ParamStore.
template <typename T>
struct GradStore {
  std::vector<std::vector<T>> grads;

  GradStore() = default;
  explicit GradStore(const ParamStore<T>& p) { reset(p); }

  void reset(const ParamStore<T>& p) {
    grads.resize(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) grads[i].assign(p[i].value.size(), T(0));
  }
  void zero() {
    for (auto& g : grads) std::fill(g.begin(), g.end(), T(0));
  }
  void add(const GradStore& o) {
    for (std::size_t i = 0; i < grads.size(); ++i)
      for (std::size_t j = 0; j < grads[i].size(); ++j) grads[i][j] += o.grads[i][j];
  }
  void scale(T s) {
    for (auto& g : grads)
      for (auto& v : g) v *= s;
  }
};

}  // namespace segpaint
