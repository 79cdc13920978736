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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "segpaint/depthlayer.hpp"
#include "segpaint/error.hpp"
#include "segpaint/instance.hpp"
#include "segpaint/scenegen.hpp"
#include "segpaint/trainer.hpp"

// Run configuration: one JSON document covering every module, merged from a
// file, dotted overrides and command-line flags.
namespace segpaint::config {

struct EvalConfig {
  std::string split = "test";
  double expansion = model::kEvalExpansion;  // box growth per side at evaluation
  double depth_threshold = depth::kDefaultThreshold;
  int grid_objects = 12;  // rows in qualitative image grids (0 disables)
  int grid_cell = 64;

  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EvalConfig, split, expansion, depth_threshold, grid_objects, grid_cell)

struct RunConfig {
  std::uint64_t seed = 0;  // seeds initialisation and every training stream
  std::string device = "cpu";
  double threshold = maskops::kDefaultThreshold;  // mask binarization
  scene::DatasetConfig dataset;
  train::TrainConfig train;
  EvalConfig eval;

  // Propagates the global fields into the module configs.
  train::TrainConfig resolved_train() const {
    train::TrainConfig t = train;
    t.seed = seed;
    t.device = device;
    t.threshold = threshold;
    return t;
  }

  void validate() const {
    resolved_train().validate();
    if (dataset.train_scenes < 0 || dataset.test_scenes < 0) throw ConfigError("dataset: scene counts must be >= 0");
    if (eval.split != "train" && eval.split != "test") throw ConfigError("eval.split must be 'train' or 'test'");
    if (!(eval.expansion >= 0 && eval.expansion <= 1)) throw ConfigError("eval.expansion must be in [0,1]");
    if (!(eval.depth_threshold >= 0 && eval.depth_threshold <= 1))
      throw ConfigError("eval.depth_threshold must be in [0,1]");
    if (eval.grid_objects < 0 || eval.grid_cell < 8) throw ConfigError("eval grid settings out of range");
  }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RunConfig, seed, device, threshold, dataset, train, eval)

namespace detail {

// Every key of `given` must exist in `reference`, recursively, and leaf
// types must agree.
inline void check_schema(const nlohmann::json& given, const nlohmann::json& reference, const std::string& path) {
  if (reference.is_object()) {
    if (!given.is_object()) throw ConfigError("schema violation at " + path + ": expected an object");
    for (const auto& [k, v] : given.items()) {
      const std::string sub = path.empty() ? k : path + "." + k;
      if (!reference.contains(k)) throw ConfigError("schema violation: unknown key '" + sub + "'");
      check_schema(v, reference.at(k), sub);
    }
    return;
  }
  const bool ok = (reference.is_number() && given.is_number()) || (reference.is_boolean() && given.is_boolean()) ||
                  (reference.is_string() && given.is_string()) || (reference.is_array() && given.is_array());
  if (!ok) throw ConfigError("schema violation at " + path + ": expected " + std::string(reference.type_name()));
  if (reference.is_number_unsigned() && given.is_number_integer() && given.get<long long>() < 0)
    throw ConfigError("schema violation at " + path + ": expected a non-negative integer");
  if (reference.is_number_integer() && !given.is_number_integer())
    throw ConfigError("schema violation at " + path + ": expected an integer");
}

}  // namespace detail

inline RunConfig from_json_checked(const nlohmann::json& j) {
  detail::check_schema(j, nlohmann::json(RunConfig{}), "");
  RunConfig c;
  try {
    c = j.get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("schema violation: ") + e.what());
  }
  c.validate();
  return c;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("missing config file " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
}

// Applies "a.b.c=value"; the value is parsed as JSON, falling back to a plain
// string.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), raw = assignment.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }
  nlohmann::json* node = &j;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) throw ConfigError("override '" + key + "' descends into a non-object");
    node = &(*node)[parts[i]];
  }
  (*node)[parts.back()] = value;
}

// Defaults, then the file (if any), then dotted overrides.
inline nlohmann::json merged_json(const std::filesystem::path& file, const std::vector<std::string>& overrides) {
  nlohmann::json j = RunConfig{};
  if (!file.empty()) j.merge_patch(read_json_file(file));
  for (const auto& o : overrides) apply_override(j, o);
  return j;
}

inline RunConfig load(const std::filesystem::path& file, const std::vector<std::string>& overrides = {}) {
  if (!file.empty()) detail::check_schema(read_json_file(file), nlohmann::json(RunConfig{}), "");
  return from_json_checked(merged_json(file, overrides));
}

inline void save(const RunConfig& c, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << nlohmann::json(c).dump(2) << '\n';
}

}  // namespace segpaint::config
