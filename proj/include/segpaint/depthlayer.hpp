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
#include <functional>
#include <map>
#include <set>
#include <tuple>
#include <utility>
#include <vector>

#include "json.hpp"
#include "segpaint/error.hpp"
#include "segpaint/image.hpp"
#include "segpaint/maskops.hpp"

// Occlusion relations between objects of one image and the depth-layering
// accuracy built on them.
namespace segpaint::depth {

inline constexpr double kDefaultThreshold = 0.05;

struct OcclusionPair {
  int occluder = 0;
  int occludee = 0;
  double score = 0;  // IoU(SV_occluder, SI_occludee)

  friend bool operator==(const OcclusionPair&, const OcclusionPair&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(OcclusionPair, occluder, occludee, score)

struct OcclusionGraph {
  int image = 0;
  std::vector<int> objects;  // every object id considered, ascending
  std::vector<OcclusionPair> edges;

  bool has_edge(int from, int to) const {
    return std::any_of(edges.begin(), edges.end(), [&](const auto& e) { return e.occluder == from && e.occludee == to; });
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(OcclusionGraph, image, objects, edges)

struct ObjectMasks {
  int id = 0;
  BinaryMask sv;  // visible mask given as input
  BinaryMask sf;  // full mask, predicted or ground truth
};

// q -> p whenever IoU(SV_q, SF_p minus SV_p) >= threshold.
inline OcclusionGraph infer_occlusions(const std::vector<ObjectMasks>& objs, double threshold = kDefaultThreshold,
                                       int image = 0) {
  OcclusionGraph g;
  g.image = image;
  if (objs.empty()) return g;
  std::vector<BinaryMask> sv, si;
  std::set<int> ids;
  for (const auto& o : objs) {
    require_shape(o.sv.same_shape(objs.front().sv) && o.sf.same_shape(o.sv), "infer_occlusions: masks are not in a common frame");
    if (!ids.insert(o.id).second) throw Error("infer_occlusions: duplicate object id " + std::to_string(o.id));
    sv.push_back(maskops::binarize(o.sv));
    si.push_back(maskops::mask_minus(maskops::binarize(o.sf), sv.back()));
  }
  g.objects.assign(ids.begin(), ids.end());
  for (std::size_t p = 0; p < objs.size(); ++p) {
    if (maskops::count(si[p]) == 0) continue;
    for (std::size_t q = 0; q < objs.size(); ++q) {
      if (q == p) continue;
      const double s = maskops::iou(sv[q], si[p]);
      if (s >= threshold && maskops::count(maskops::mask_and(sv[q], si[p])) > 0)
        g.edges.push_back({objs[q].id, objs[p].id, s});
    }
  }
  std::sort(g.edges.begin(), g.edges.end(), [](const auto& a, const auto& b) {
    return std::pair(a.occluder, a.occludee) < std::pair(b.occluder, b.occludee);
  });
  return g;
}

struct GroundTruthObject {
  int id = 0;
  int depth_rank = 0;  // 0 is nearest the camera
  BinaryMask sv, si;
};

struct GroundTruthPairs {
  int image = 0;
  std::vector<std::pair<int, int>> pairs;  // (front, behind)
};

// Ground-truth ordered pairs: q in front of p with IoU(SV_q, SI_p) clearing
// the threshold.
inline GroundTruthPairs gt_pairs(const std::vector<GroundTruthObject>& objs, double threshold = kDefaultThreshold,
                                 int image = 0) {
  GroundTruthPairs gt;
  gt.image = image;
  for (const auto& p : objs) {
    if (maskops::count(p.si) == 0) continue;
    for (const auto& q : objs) {
      if (q.id == p.id || q.depth_rank >= p.depth_rank) continue;
      if (maskops::count(maskops::mask_and(q.sv, p.si)) == 0) continue;
      if (maskops::iou(q.sv, p.si) >= threshold) gt.pairs.emplace_back(q.id, p.id);
    }
  }
  std::sort(gt.pairs.begin(), gt.pairs.end());
  return gt;
}

// Fraction of ground-truth pairs predicted with the right direction,
// averaged over images that have at least one ground-truth pair. Returns 1
// when no image has any pair.
inline double depth_accuracy(const std::vector<OcclusionGraph>& pred, const std::vector<GroundTruthPairs>& gt) {
  if (pred.size() != gt.size()) throw Error("depth_accuracy: prediction and ground truth image counts differ");
  double sum = 0;
  int images = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].image != gt[i].image)
      throw Error("depth_accuracy: image id mismatch (" + std::to_string(pred[i].image) + " vs " +
                  std::to_string(gt[i].image) + ")");
    if (gt[i].pairs.empty()) continue;
    int correct = 0;
    for (const auto& [q, p] : gt[i].pairs) correct += pred[i].has_edge(q, p) && !pred[i].has_edge(p, q);
    sum += double(correct) / double(gt[i].pairs.size());
    ++images;
  }
  return images == 0 ? 1.0 : sum / images;
}

struct Layering {
  std::vector<std::vector<int>> layers;  // front to back
  std::vector<OcclusionPair> dropped;    // edges removed to break cycles
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Layering, layers, dropped)

namespace detail {

// Edges of one directed cycle, or empty when the graph is acyclic.
inline std::vector<int> find_cycle(const std::vector<int>& nodes, const std::vector<OcclusionPair>& edges) {
  std::map<int, std::vector<int>> out;  // node -> edge indices
  for (std::size_t i = 0; i < edges.size(); ++i) out[edges[i].occluder].push_back(static_cast<int>(i));
  std::map<int, int> color;  // 0 new, 1 on stack, 2 done
  std::vector<int> stack;    // edge indices along the current path
  std::vector<int> cycle;
  std::function<bool(int)> dfs = [&](int u) {
    color[u] = 1;
    for (int e : out[u]) {
      const int v = edges[e].occludee;
      stack.push_back(e);
      if (color[v] == 1) {
        auto it = std::find_if(stack.begin(), stack.end(), [&](int k) { return edges[k].occluder == v; });
        cycle.assign(it, stack.end());
        return true;
      }
      if (color[v] == 0 && dfs(v)) return true;
      stack.pop_back();
    }
    color[u] = 2;
    return false;
  };
  for (int n : nodes)
    if (color[n] == 0 && dfs(n)) return cycle;
  return {};
}

}  // namespace detail

// Layers from the front: an object sits one layer behind its deepest
// occluder. Cycles are broken by repeatedly removing the lowest-scoring edge
// on a cycle.
inline Layering layer_order(const OcclusionGraph& g) {
  Layering out;
  std::set<int> node_set(g.objects.begin(), g.objects.end());
  for (const auto& e : g.edges) node_set.insert(e.occluder), node_set.insert(e.occludee);
  const std::vector<int> nodes(node_set.begin(), node_set.end());
  std::vector<OcclusionPair> edges;
  for (const auto& e : g.edges)
    if (e.occluder != e.occludee) edges.push_back(e);

  for (auto cyc = detail::find_cycle(nodes, edges); !cyc.empty(); cyc = detail::find_cycle(nodes, edges)) {
    const int worst = *std::min_element(cyc.begin(), cyc.end(), [&](int a, int b) {
      return std::tuple(edges[a].score, edges[a].occluder, edges[a].occludee) <
             std::tuple(edges[b].score, edges[b].occluder, edges[b].occludee);
    });
    out.dropped.push_back(edges[worst]);
    edges.erase(edges.begin() + worst);
  }

  std::map<int, int> layer;
  for (int n : nodes) layer[n] = 0;
  // Longest path on a DAG by relaxation; |V| rounds suffice.
  for (std::size_t round = 0; round < nodes.size(); ++round) {
    bool changed = false;
    for (const auto& e : edges)
      if (layer[e.occludee] < layer[e.occluder] + 1) layer[e.occludee] = layer[e.occluder] + 1, changed = true;
    if (!changed) break;
  }
  int depth = 0;
  for (const auto& [n, l] : layer) depth = std::max(depth, l + 1);
  out.layers.assign(depth, {});
  for (const auto& [n, l] : layer) out.layers[l].push_back(n);
  return out;
}

}  // namespace segpaint::depth
