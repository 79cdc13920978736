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

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "segpaint/error.hpp"
#include "segpaint/image.hpp"
#include "segpaint/maskops.hpp"
#include "segpaint/rng.hpp"
#include "segpaint/tensor.hpp"

// Minimal reverse-mode differentiation over single-example tensors. Each op
// appends a node holding its value and a closure that pushes the node's
// gradient back to its inputs. Tapes are cheap, single-use and not shared
// between threads.
namespace segpaint::ag {

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

template <typename T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, int)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor<T> v) { return push(std::move(v), false, nullptr); }

  // Input that gradients should reach (used for gradient checks).
  Var input(Tensor<T> v) { return push(std::move(v), grad_enabled_, nullptr); }

  // Parameter leaf. Repeated requests for the same parameter share one node.
  Var parameter(const ParamStore<T>& store, int index) {
    auto it = param_nodes_.find(index);
    if (it != param_nodes_.end()) return {it->second};
    Var v = push(store[index].value, grad_enabled_ && !frozen(index), nullptr);
    nodes_[v.id].param = index;
    param_nodes_[index] = v.id;
    return v;
  }
  Var parameter(const ParamStore<T>& store, const std::string& name) { return parameter(store, store.index(name)); }

  // Parameters whose gradient is never needed on this tape.
  void freeze(int index) { frozen_.push_back(index); }

  Var push(Tensor<T> value, bool requires_grad, Backward back) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad && grad_enabled_;
    if (n.requires_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return {static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor<T>& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  bool any_requires_grad(std::initializer_list<Var> vs) const {
    for (Var v : vs)
      if (v.valid() && requires_grad(v)) return true;
    return false;
  }

  // Gradient buffer of a node, zero-initialised on first use.
  Tensor<T>& grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor<T>(n.value.c, n.value.h, n.value.w);
    return n.grad;
  }
  Tensor<T>& grad(Var v) { return grad(v.id); }
  bool has_grad(Var v) const { return !nodes_.at(v.id).grad.empty(); }

  void backward(Var loss) {
    if (value(loss).size() != 1) throw Error("Tape::backward: loss must be a scalar");
    if (!requires_grad(loss)) return;
    grad(loss).data[0] = T(1);
    for (int id = loss.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.requires_grad || !n.back || n.grad.empty()) continue;
      n.back(*this, id);
    }
  }

  // Adds every parameter gradient produced by backward() into `out`.
  void accumulate(GradStore<T>& out) const {
    for (const auto& [index, id] : param_nodes_) {
      const Node& n = nodes_[id];
      if (n.grad.empty()) continue;
      auto& dst = out.grads.at(index);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += n.grad.data[i];
    }
  }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    bool requires_grad = false;
    int param = -1;
    Backward back;
  };

  bool frozen(int index) const { return std::find(frozen_.begin(), frozen_.end(), index) != frozen_.end(); }

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::unordered_map<int, int> param_nodes_;
  std::vector<int> frozen_;
};

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
void check_finite(const Tensor<T>& t, const char* op) {
  for (T v : t.data)
    if (!std::isfinite(v)) throw Error(std::string("non-finite activation in ") + op);
}

}  // namespace detail

struct ConvSpec {
  int kernel = 3;
  int stride = 1;
  int pad = 1;
};

inline int conv_out(int in, const ConvSpec& s) { return (in + 2 * s.pad - s.kernel) / s.stride + 1; }

namespace detail {

template <typename T>
void im2col(const Tensor<T>& x, const ConvSpec& s, int ho, int wo, Buffer<T>& cols) {
  const int k = s.kernel;
  const std::size_t n = static_cast<std::size_t>(ho) * wo;
  cols.assign(static_cast<std::size_t>(x.c) * k * k * n, T(0));
  for (int c = 0; c < x.c; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * n;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s.stride - s.pad + ky;
          if (iy < 0 || iy >= x.h) continue;
          const T* src = x.data.data() + c * x.plane() + static_cast<std::size_t>(iy) * x.w;
          T* dst = row + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s.stride - s.pad + kx;
            if (ix >= 0 && ix < x.w) dst[ox] = src[ix];
          }
        }
      }
}

template <typename T>
void col2im(const Buffer<T>& cols, const ConvSpec& s, int ho, int wo, Tensor<T>& dx) {
  const int k = s.kernel;
  const std::size_t n = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < dx.c; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * n;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * s.stride - s.pad + ky;
          if (iy < 0 || iy >= dx.h) continue;
          T* dst = dx.data.data() + c * dx.plane() + static_cast<std::size_t>(iy) * dx.w;
          const T* src = row + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * s.stride - s.pad + kx;
            if (ix >= 0 && ix < dx.w) dst[ix] += src[ox];
          }
        }
      }
}

}  // namespace detail

// 2-D convolution. `w` has shape (cout, cin, k*k), `b` has cout entries.
template <typename T>
Var conv2d(Tape<T>& tape, Var x, Var w, Var b, const ConvSpec& s) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(w);
  const int cout = wv.c;
  const int kk = s.kernel * s.kernel;
  if (wv.h != xv.c || wv.w != kk)
    throw ShapeError("conv2d: weight shape does not match input channels / kernel");
  const int ho = conv_out(xv.h, s), wo = conv_out(xv.w, s);
  if (ho <= 0 || wo <= 0) throw ShapeError("conv2d: input smaller than kernel");
  const int kdim = xv.c * kk;
  const int n = ho * wo;

  Buffer<T> cols;
  detail::im2col(xv, s, ho, wo, cols);
  Tensor<T> out(cout, ho, wo);
  {
    detail::CMapMat<T> W(wv.data.data(), cout, kdim);
    detail::CMapMat<T> C(cols.data(), kdim, n);
    detail::MapMat<T> O(out.data.data(), cout, n);
    O.noalias() = W * C;
    const Tensor<T>& bv = tape.value(b);
    for (int o = 0; o < cout; ++o) O.row(o).array() += bv.data[o];
  }
  const bool rg = tape.any_requires_grad({x, w, b});
  return tape.push(std::move(out), rg,
                   [x, w, b, s, ho, wo, kdim, n, cout, cols = std::move(cols)](Tape<T>& t, int self) {
                     const Tensor<T>& g = t.grad(self);
                     detail::CMapMat<T> G(g.data.data(), cout, n);
                     if (t.requires_grad(w)) {
                       detail::MapMat<T> dW(t.grad(w).data.data(), cout, kdim);
                       detail::CMapMat<T> C(cols.data(), kdim, n);
                       dW.noalias() += G * C.transpose();
                     }
                     if (t.requires_grad(b)) {
                       auto& db = t.grad(b).data;
                       for (int o = 0; o < cout; ++o) db[o] += G.row(o).sum();
                     }
                     if (t.requires_grad(x)) {
                       const Tensor<T>& wv = t.value(w);
                       detail::CMapMat<T> W(wv.data.data(), cout, kdim);
                       Buffer<T> dcols(static_cast<std::size_t>(kdim) * n);
                       detail::MapMat<T> DC(dcols.data(), kdim, n);
                       DC.noalias() = W.transpose() * G;
                       detail::col2im(dcols, s, ho, wo, t.grad(x));
                     }
                   });
}

// Fully connected layer on the flattened input. `w` is (out, in, 1).
template <typename T>
Var linear(Tape<T>& tape, Var x, Var w, Var b) {
  const Tensor<T>& xv = tape.value(x);
  const Tensor<T>& wv = tape.value(w);
  const int in = static_cast<int>(xv.size());
  const int outn = wv.c;
  if (wv.h * wv.w != in) throw ShapeError("linear: weight shape does not match input size");
  Tensor<T> out(outn, 1, 1);
  {
    detail::CMapMat<T> W(wv.data.data(), outn, in);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> X(xv.data.data(), in);
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> Y(out.data.data(), outn);
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> B(tape.value(b).data.data(), outn);
    Y.noalias() = W * X + B;
  }
  const bool rg = tape.any_requires_grad({x, w, b});
  return tape.push(std::move(out), rg, [x, w, b, in, outn](Tape<T>& t, int self) {
    using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
    Eigen::Map<const Vec> G(t.grad(self).data.data(), outn);
    if (t.requires_grad(w)) {
      detail::MapMat<T> dW(t.grad(w).data.data(), outn, in);
      Eigen::Map<const Vec> X(t.value(x).data.data(), in);
      dW.noalias() += G * X.transpose();
    }
    if (t.requires_grad(b)) {
      Eigen::Map<Vec> dB(t.grad(b).data.data(), outn);
      dB += G;
    }
    if (t.requires_grad(x)) {
      detail::CMapMat<T> W(t.value(w).data.data(), outn, in);
      Eigen::Map<Vec> dX(t.grad(x).data.data(), in);
      dX.noalias() += W.transpose() * G;
    }
  });
}

template <typename T>
Var reshape(Tape<T>& tape, Var x, int c, int h, int w) {
  const Tensor<T>& xv = tape.value(x);
  if (static_cast<std::size_t>(c) * h * w != xv.size()) throw ShapeError("reshape: size mismatch");
  Tensor<T> out(c, h, w);
  out.data = xv.data;
  return tape.push(std::move(out), tape.requires_grad(x), [x](Tape<T>& t, int self) {
    const auto& g = t.grad(self).data;
    auto& d = t.grad(x).data;
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
  });
}

template <typename T>
Var add(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  if (!av.same_shape(bv)) throw ShapeError("add: shape mismatch");
  Tensor<T> out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += bv.data[i];
  return tape.push(std::move(out), tape.any_requires_grad({a, b}), [a, b](Tape<T>& t, int self) {
    const auto& g = t.grad(self).data;
    for (Var v : {a, b}) {
      if (!t.requires_grad(v)) continue;
      auto& d = t.grad(v).data;
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  });
}

// Elementwise max(x, slope * x). slope = 0 gives ReLU.
template <typename T>
Var leaky_relu(Tape<T>& tape, Var x, T slope) {
  Tensor<T> out = tape.value(x);
  for (auto& v : out.data)
    if (v < 0) v *= slope;
  return tape.push(std::move(out), tape.requires_grad(x), [x, slope](Tape<T>& t, int self) {
    const auto& g = t.grad(self).data;
    const auto& xv = t.value(x).data;
    auto& d = t.grad(x).data;
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += xv[i] < 0 ? slope * g[i] : g[i];
  });
}

template <typename T>
Var relu(Tape<T>& tape, Var x) {
  return leaky_relu(tape, x, T(0));
}

template <typename T>
Var sigmoid(Tape<T>& tape, Var x) {
  Tensor<T> out = tape.value(x);
  for (auto& v : out.data) v = T(1) / (T(1) + std::exp(-v));
  return tape.push(std::move(out), tape.requires_grad(x), [x](Tape<T>& t, int self) {
    const auto& g = t.grad(self).data;
    const auto& y = t.value(Var{self}).data;
    auto& d = t.grad(x).data;
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * y[i] * (1 - y[i]);
  });
}

// Inverted dropout: zeroes each element with probability p and rescales the
// survivors by 1 / (1 - p).
template <typename T>
Var dropout(Tape<T>& tape, Var x, double p, RandomSource& rng) {
  if (p <= 0.0) return x;
  if (p >= 1.0) throw Error("dropout: rate must be < 1");
  Tensor<T> out = tape.value(x);
  std::vector<T> keep(out.size());
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  for (std::size_t i = 0; i < out.size(); ++i) {
    keep[i] = rng.uniform() < p ? T(0) : scale;
    out.data[i] *= keep[i];
  }
  return tape.push(std::move(out), tape.requires_grad(x), [x, keep = std::move(keep)](Tape<T>& t, int self) {
    const auto& g = t.grad(self).data;
    auto& d = t.grad(x).data;
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * keep[i];
  });
}

// Channel concatenation of equally sized maps.
template <typename T>
Var concat(Tape<T>& tape, Var a, Var b) {
  const Tensor<T>& av = tape.value(a);
  const Tensor<T>& bv = tape.value(b);
  if (av.h != bv.h || av.w != bv.w) throw ShapeError("concat: spatial size mismatch");
  Tensor<T> out(av.c + bv.c, av.h, av.w);
  std::copy(av.data.begin(), av.data.end(), out.data.begin());
  std::copy(bv.data.begin(), bv.data.end(), out.data.begin() + av.size());
  const std::size_t split = av.size();
  return tape.push(std::move(out), tape.any_requires_grad({a, b}), [a, b, split](Tape<T>& t, int self) {
    const auto& g = t.grad(self).data;
    if (t.requires_grad(a)) {
      auto& d = t.grad(a).data;
      for (std::size_t i = 0; i < split; ++i) d[i] += g[i];
    }
    if (t.requires_grad(b)) {
      auto& d = t.grad(b).data;
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[split + i];
    }
  });
}

template <typename T>
Var upsample_nearest2x(Tape<T>& tape, Var x) {
  const Tensor<T>& xv = tape.value(x);
  Tensor<T> out(xv.c, xv.h * 2, xv.w * 2);
  for (int c = 0; c < xv.c; ++c)
    for (int y = 0; y < out.h; ++y)
      for (int xx = 0; xx < out.w; ++xx) out(c, y, xx) = xv(c, y / 2, xx / 2);
  return tape.push(std::move(out), tape.requires_grad(x), [x](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    Tensor<T>& d = t.grad(x);
    for (int c = 0; c < g.c; ++c)
      for (int y = 0; y < g.h; ++y)
        for (int xx = 0; xx < g.w; ++xx) d(c, y / 2, xx / 2) += g(c, y, xx);
  });
}

// Fixed (parameter-free) bilinear resize of every channel, half-pixel
// convention, matching maskops::resize.
template <typename T>
Var resize_bilinear(Tape<T>& tape, Var x, int out_h, int out_w) {
  const Tensor<T>& xv = tape.value(x);
  auto ys = maskops::crop_plan(0, xv.h, xv.h, out_h);
  auto xs = maskops::crop_plan(0, xv.w, xv.w, out_w);
  Tensor<T> out(xv.c, out_h, out_w);
  for (int c = 0; c < xv.c; ++c)
    maskops::resample_plane<T>(std::span<const T>(xv.data).subspan(c * xv.plane(), xv.plane()), xv.w, ys, xs,
                               std::span<T>(out.data).subspan(c * out.plane(), out.plane()));
  return tape.push(std::move(out), tape.requires_grad(x),
                   [x, ys = std::move(ys), xs = std::move(xs)](Tape<T>& t, int self) {
                     const Tensor<T>& g = t.grad(self);
                     Tensor<T>& d = t.grad(x);
                     for (int c = 0; c < g.c; ++c)
                       for (int y = 0; y < g.h; ++y) {
                         const T fy = static_cast<T>(ys.frac[y]);
                         for (int xx = 0; xx < g.w; ++xx) {
                           const T fx = static_cast<T>(xs.frac[xx]);
                           const T v = g(c, y, xx);
                           d(c, ys.lo[y], xs.lo[xx]) += v * (1 - fy) * (1 - fx);
                           d(c, ys.lo[y], xs.hi[xx]) += v * (1 - fy) * fx;
                           d(c, ys.hi[y], xs.lo[xx]) += v * fy * (1 - fx);
                           d(c, ys.hi[y], xs.hi[xx]) += v * fy * fx;
                         }
                       }
                   });
}

// Cell range [begin, end) of ROI bin `i` of `bins` spanning [lo, hi) on an
// axis of `len` cells. Never empty.
inline std::pair<int, int> roi_bin(double lo, double hi, int i, int bins, int len) {
  const double step = (hi - lo) / bins;
  int b = static_cast<int>(std::floor(lo + i * step));
  int e = static_cast<int>(std::ceil(lo + (i + 1) * step));
  b = std::clamp(b, 0, len - 1);
  e = std::clamp(e, b + 1, len);
  return {b, e};
}

// Max pooling of the region `box` (feature-map coordinates) into a
// grid x grid map per channel.
template <typename T>
Var roi_max_pool(Tape<T>& tape, Var x, const BoxF& box, int grid) {
  const Tensor<T>& xv = tape.value(x);
  if (!(box.x1 > box.x0 && box.y1 > box.y0)) throw Error("roi_max_pool: empty box");
  if (box.x0 < 0 || box.y0 < 0 || box.x1 > xv.w + 1e-9 || box.y1 > xv.h + 1e-9)
    throw Error("roi_max_pool: box outside feature map");
  Tensor<T> out(xv.c, grid, grid);
  std::vector<int> argmax(out.size());
  for (int c = 0; c < xv.c; ++c)
    for (int by = 0; by < grid; ++by) {
      const auto [y0, y1] = roi_bin(box.y0, box.y1, by, grid, xv.h);
      for (int bx = 0; bx < grid; ++bx) {
        const auto [x0, x1] = roi_bin(box.x0, box.x1, bx, grid, xv.w);
        T best = -std::numeric_limits<T>::infinity();
        int best_i = -1;
        for (int y = y0; y < y1; ++y)
          for (int xx = x0; xx < x1; ++xx) {
            const int idx = c * static_cast<int>(xv.plane()) + y * xv.w + xx;
            if (xv.data[idx] > best) best = xv.data[idx], best_i = idx;
          }
        const std::size_t o = c * out.plane() + static_cast<std::size_t>(by) * grid + bx;
        out.data[o] = best;
        argmax[o] = best_i;
      }
    }
  return tape.push(std::move(out), tape.requires_grad(x), [x, argmax = std::move(argmax)](Tape<T>& t, int self) {
    const auto& g = t.grad(self).data;
    auto& d = t.grad(x).data;
    for (std::size_t i = 0; i < g.size(); ++i) d[argmax[i]] += g[i];
  });
}

// Generator-input composition on the tape. `image` (3 x H x W) and `visible`
// (1 x H x W) are constants; `full` is the soft predicted mask. The forward
// pass uses binarized masks exactly as maskops::compose_generator_input; the
// backward pass treats binarization as identity (straight-through), so the
// gradient w.r.t. a non-visible pixel of `full` is dM_red - dM_blue.
template <typename T>
Var compose_generator_input(Tape<T>& tape, const Tensor<T>& image, Var full, const Tensor<T>& visible,
                            double threshold = maskops::kDefaultThreshold) {
  const Tensor<T>& ov = tape.value(full);
  if (image.c != 3 || ov.c != 1 || visible.c != 1 || image.h != ov.h || image.w != ov.w || visible.h != ov.h ||
      visible.w != ov.w)
    throw ShapeError("compose_generator_input: shape mismatch");
  Tensor<T> out(3, ov.h, ov.w);
  std::vector<unsigned char> vis(ov.plane());
  for (std::size_t i = 0; i < ov.plane(); ++i) {
    vis[i] = visible.data[i] >= threshold;
    switch (maskops::classify(ov.data[i] >= threshold, vis[i])) {
      case maskops::Region::kVisible:
        for (int c = 0; c < 3; ++c) out.data[c * ov.plane() + i] = image.data[c * ov.plane() + i];
        break;
      case maskops::Region::kInvisible:
        out.data[i] = 1;
        break;
      case maskops::Region::kBackground:
        out.data[2 * ov.plane() + i] = 1;
        break;
    }
  }
  return tape.push(std::move(out), tape.requires_grad(full), [full, vis = std::move(vis)](Tape<T>& t, int self) {
    const Tensor<T>& g = t.grad(self);
    auto& d = t.grad(full).data;
    const std::size_t plane = g.plane();
    for (std::size_t i = 0; i < plane; ++i)
      if (!vis[i]) d[i] += g.data[i] - g.data[2 * plane + i];
  });
}

// Copy of x that blocks gradients.
template <typename T>
Var detach(Tape<T>& tape, Var x) {
  return tape.constant(tape.value(x));
}

// Scalar node whose value and input gradients were computed outside the
// tape (the loss functions). `grads[i]` has the shape of `inputs[i]`.
template <typename T>
Var external_loss(Tape<T>& tape, T value, std::vector<Var> inputs, std::vector<std::vector<T>> grads) {
  if (inputs.size() != grads.size()) throw Error("external_loss: inputs and grads differ in count");
  bool rg = false;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (tape.value(inputs[i]).size() != grads[i].size()) throw ShapeError("external_loss: gradient shape mismatch");
    rg = rg || tape.requires_grad(inputs[i]);
  }
  Tensor<T> out(1, 1, 1, value);
  return tape.push(std::move(out), rg,
                   [inputs = std::move(inputs), grads = std::move(grads)](Tape<T>& t, int self) {
                     const T g = t.grad(self).data[0];
                     for (std::size_t i = 0; i < inputs.size(); ++i) {
                       if (!t.requires_grad(inputs[i])) continue;
                       auto& d = t.grad(inputs[i]).data;
                       for (std::size_t j = 0; j < d.size(); ++j) d[j] += g * grads[i][j];
                     }
                   });
}

// sum_i weights[i] * terms[i] over scalar nodes.
template <typename T>
Var weighted_sum(Tape<T>& tape, std::vector<Var> terms, std::vector<T> weights) {
  if (terms.size() != weights.size()) throw Error("weighted_sum: size mismatch");
  T v = 0;
  bool rg = false;
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (tape.value(terms[i]).size() != 1) throw ShapeError("weighted_sum: terms must be scalars");
    v += weights[i] * tape.value(terms[i]).data[0];
    rg = rg || tape.requires_grad(terms[i]);
  }
  return tape.push(Tensor<T>(1, 1, 1, v), rg,
                   [terms = std::move(terms), weights = std::move(weights)](Tape<T>& t, int self) {
                     const T g = t.grad(self).data[0];
                     for (std::size_t i = 0; i < terms.size(); ++i)
                       if (t.requires_grad(terms[i])) t.grad(terms[i]).data[0] += g * weights[i];
                   });
}

template <typename T>
void ensure_finite(const Tape<T>& tape, Var v, const char* what) {
  detail::check_finite(tape.value(v), what);
}

}  // namespace segpaint::ag
