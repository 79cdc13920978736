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

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "segpaint/error.hpp"
#include "segpaint/instance.hpp"
#include "segpaint/losses.hpp"
#include "segpaint/netarch.hpp"
#include "segpaint/scenegen.hpp"

// Two-phase training: segmentor and generator first, then everything
// end-to-end against the discriminator.
namespace segpaint::train {

struct TrainConfig {
  net::NetConfig net;
  losses::LossWeights weights;
  long phase1_steps = 2000;
  long phase2_steps = 2000;
  int batch_size = 8;
  double lr_g = 2e-4, lr_d = 2e-4, lr_seg = 1e-3;
  double beta1 = 0.5, beta2 = 0.999, adam_eps = 1e-8;
  int d_steps = 1;  // discriminator updates per joint update in phase 2
  bool saturating_gan = false;
  double expand_lo = 0.10, expand_hi = 0.30;
  double threshold = maskops::kDefaultThreshold;
  std::uint64_t seed = 0;
  std::string device = "cpu";
  long checkpoint_every = 0;  // 0: only at the end

  void validate() const {
    net.validate();
    auto bad = [](const std::string& m) { throw ConfigError("TrainConfig: " + m); };
    if (phase1_steps < 0 || phase2_steps < 0) bad("step counts must be >= 0");
    if (batch_size < 1) bad("batch_size must be >= 1");
    if (!(lr_g >= 0 && lr_d >= 0 && lr_seg >= 0)) bad("learning rates must be >= 0");
    if (!(beta1 >= 0 && beta1 < 1 && beta2 >= 0 && beta2 < 1 && adam_eps > 0)) bad("invalid Adam constants");
    if (d_steps < 1) bad("d_steps must be >= 1");
    if (!(expand_lo >= 0 && expand_lo <= expand_hi && expand_hi <= 1)) bad("expansion range must satisfy 0 <= lo <= hi <= 1");
    if (!(threshold > 0 && threshold < 1)) bad("threshold must be in (0,1)");
    if (device != "cpu") bad("unsupported device '" + device + "' (only cpu is available)");
    if (checkpoint_every < 0) bad("checkpoint_every must be >= 0");
  }

  long total_steps() const { return phase1_steps + phase2_steps; }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

}  // namespace segpaint::train

namespace segpaint::losses {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(LossWeights, bg, sv, si, l1, lstar)
}

namespace segpaint::train {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, net, weights, phase1_steps, phase2_steps, batch_size, lr_g,
                                                lr_d, lr_seg, beta1, beta2, adam_eps, d_steps, saturating_gan,
                                                expand_lo, expand_hi, threshold, seed, device, checkpoint_every)

// FNV-1a over the canonical JSON of everything that affects the optimisation
// trajectory.
inline std::string config_hash(const TrainConfig& cfg) {
  nlohmann::json j = cfg;
  j.erase("checkpoint_every");
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : j.dump()) h = (h ^ c) * 1099511628211ULL;
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct AdamState {
  std::vector<std::vector<float>> m, v;
  std::array<long, 3> t{};  // update count per network part

  void reset(const net::NetParams<float>& p) {
    m.assign(p.size(), {});
    v.assign(p.size(), {});
    for (std::size_t i = 0; i < p.size(); ++i) m[i].assign(p[i].value.size(), 0.f), v[i].assign(p[i].value.size(), 0.f);
    t = {};
  }
  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// One Adam update of the parameters belonging to `part`.
inline void adam_step(net::NetParams<float>& p, const GradStore<float>& g, AdamState& s, net::Part part, double lr,
                      const TrainConfig& cfg) {
  const long t = ++s.t[static_cast<int>(part)];
  const double c1 = 1 - std::pow(cfg.beta1, double(t)), c2 = 1 - std::pow(cfg.beta2, double(t));
  const float b1 = float(cfg.beta1), b2 = float(cfg.beta2);
  const float step = float(lr * std::sqrt(c2) / c1), eps = float(cfg.adam_eps * std::sqrt(c2));
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (net::part_of(p[i].name) != part) continue;
    auto& w = p[i].value.data;
    auto& m = s.m[i];
    auto& v = s.v[i];
    const auto& gi = g.grads[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      m[k] = b1 * m[k] + (1 - b1) * gi[k];
      v[k] = b2 * v[k] + (1 - b2) * gi[k] * gi[k];
      w[k] -= step * m[k] / (std::sqrt(v[k]) + eps);
    }
  }
}

struct TrainState {
  net::NetParams<float> params;
  AdamState adam;
  long step = 0;  // completed steps
  std::string rng_state;

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

inline TrainState init_state(const TrainConfig& cfg) {
  cfg.validate();
  RandomSource rng(derive_seed(cfg.seed, 0));
  TrainState s;
  s.params = net::init_params<float>(cfg.net, rng);
  s.adam.reset(s.params);
  s.rng_state = rng.state();
  return s;
}

struct StepRecord {
  long step = 0;  // 1-based index of the step just taken
  int phase = 1;
  int used = 0, skipped = 0;  // instances in the batch
  losses::LossBreakdown loss;
  double seconds = 0;
};

inline nlohmann::json to_json(const StepRecord& r) {
  const auto& l = r.loss;
  return {{"step", r.step},     {"phase", r.phase},   {"bg_bce", l.bg_bce}, {"sv_bce", l.sv_bce},
          {"si_bce", l.si_bce}, {"gan_g", l.gan_g},   {"gan_d", l.gan_d},   {"l1", l.l1},
          {"segm", l.segm},     {"total", l.total},   {"used", r.used},     {"skipped", r.skipped},
          {"seconds", r.seconds}};
}

class TrainError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void average(losses::LossBreakdown& acc, double n) {
  for (double* v : {&acc.bg_bce, &acc.sv_bce, &acc.si_bce, &acc.gan_g, &acc.l1}) *v /= n;
}

struct Pass {
  ag::Tape<float> tape{true};
  model::InstanceVars vars;
  ag::Var segm, l1;
  losses::LossBreakdown parts;
  const model::Instance* inst = nullptr;
};

// Forward pass plus segmentation and L1 loss nodes for one instance.
inline void build_pass(Pass& ps, const TrainState& st, const TrainConfig& cfg, const model::Instance& in,
                       RandomSource& rng) {
  ps.inst = &in;
  for (std::size_t i = 0; i < st.params.size(); ++i)
    if (net::part_of(st.params[i].name) == net::Part::kDiscriminator) ps.tape.freeze(static_cast<int>(i));
  ps.vars = model::forward(ps.tape, st.params, cfg.net, in, net::NoiseState::on(rng), cfg.threshold);
  const auto o = net::to_mask(ps.tape.value(ps.vars.seg.o));
  const auto sg = losses::segm_loss(in.gt_sf, o, in.gt_sv, in.gt_si, cfg.weights);
  ps.parts.bg_bce = sg.bg, ps.parts.sv_bce = sg.sv, ps.parts.si_bce = sg.si;
  ps.segm = ag::external_loss(ps.tape, sg.value, {ps.vars.seg.o}, {sg.grad.storage()});
  const auto painted = net::to_image(ps.tape.value(ps.vars.painted));
  const auto l1 = losses::l1_paint(painted, in.target);
  ps.parts.l1 = l1.value;
  ps.l1 = ag::external_loss(ps.tape, l1.value, {ps.vars.painted}, {l1.grad.storage()});
}

inline void require_finite(const losses::LossBreakdown& l, long step) {
  if (!l.finite()) throw TrainError("non-finite loss at step " + std::to_string(step));
}

}  // namespace detail

// Takes one optimisation step. Batch composition, box jitter and generator
// noise come from a stream keyed on (seed, step), so a resumed run replays the
// uninterrupted one exactly.
inline StepRecord train_step(const TrainConfig& cfg, const std::vector<scene::Sample>& data, TrainState& st) {
  if (data.empty()) throw TrainError("training set is empty");
  const auto t0 = std::chrono::steady_clock::now();
  StepRecord rec;
  rec.step = st.step + 1;
  rec.phase = st.step < cfg.phase1_steps ? 1 : 2;
  RandomSource rng(derive_seed(derive_seed(cfg.seed, 1), static_cast<std::uint64_t>(st.step)));

  std::vector<model::Instance> batch;
  for (int b = 0; b < cfg.batch_size; ++b) {
    const auto& s = data[rng.uniform_int(0, static_cast<int>(data.size()) - 1)];
    if (auto in = model::training_example(s, cfg.net, cfg.expand_lo, cfg.expand_hi, rng))
      batch.push_back(std::move(*in));
    else
      ++rec.skipped;
  }
  rec.used = static_cast<int>(batch.size());
  if (batch.empty()) {
    st.step = rec.step;
    st.rng_state = rng.state();
    return rec;
  }

  const float inv_b = 1.f / float(batch.size());
  const float l1w = float(cfg.weights.lstar * cfg.weights.l1);
  std::vector<detail::Pass> passes(batch.size());
  double d_loss = 0;
  try {
    for (std::size_t i = 0; i < batch.size(); ++i) detail::build_pass(passes[i], st, cfg, batch[i], rng);

    if (rec.phase == 2) {
      // Discriminator on detached pairs: (composed, target) real, (composed, painted) fake.
      for (int k = 0; k < cfg.d_steps; ++k) {
        GradStore<float> gd(st.params);
        double gan_d = 0;
        for (auto& ps : passes) {
          ag::Tape<float> tape(true);
          auto cond = tape.constant(ps.tape.value(ps.vars.composed));
          auto real = net::discriminator_on_tape(tape, st.params, cfg.net, cond, tape.constant(net::to_tensor(ps.inst->target)));
          auto fake = net::discriminator_on_tape(tape, st.params, cfg.net, cond, tape.constant(ps.tape.value(ps.vars.painted)));
          const auto& rv = tape.value(real).data;
          const auto& fv = tape.value(fake).data;
          const auto g = losses::gan_losses<float>(rv, fv, cfg.saturating_gan);
          gan_d += g.gan_d;
          auto loss = ag::external_loss(tape, g.gan_d, {real, fake}, {g.dd_dreal, g.dd_dfake});
          tape.backward(loss);
          tape.accumulate(gd);
        }
        gd.scale(inv_b);
        adam_step(st.params, gd, st.adam, net::Part::kDiscriminator, cfg.lr_d, cfg);
        d_loss = gan_d / double(batch.size());
      }
      // Generator-side adversarial term against the updated discriminator.
      for (auto& ps : passes) {
        auto fake = net::discriminator_on_tape(ps.tape, st.params, cfg.net, ps.vars.composed, ps.vars.painted);
        const auto& fv = ps.tape.value(fake).data;
        const auto g = losses::gan_losses<float>({}, fv, cfg.saturating_gan);
        ps.parts.gan_g = g.gan_g;
        auto adv = ag::external_loss(ps.tape, g.gan_g, {fake}, {g.dg_dfake});
        auto total = ag::weighted_sum(ps.tape, {ps.segm, adv, ps.l1}, {1.f, float(cfg.weights.lstar), l1w});
        ps.tape.backward(total);
      }
    } else {
      for (auto& ps : passes) ps.tape.backward(ag::weighted_sum(ps.tape, {ps.segm, ps.l1}, {1.f, l1w}));
    }
  } catch (const TrainError&) {
    throw;
  } catch (const Error& e) {
    throw TrainError("step " + std::to_string(rec.step) + ": " + e.what());
  }

  GradStore<float> g(st.params);
  for (auto& ps : passes) {
    ps.tape.accumulate(g);
    rec.loss.bg_bce += ps.parts.bg_bce, rec.loss.sv_bce += ps.parts.sv_bce, rec.loss.si_bce += ps.parts.si_bce;
    rec.loss.gan_g += ps.parts.gan_g, rec.loss.l1 += ps.parts.l1;
  }
  detail::average(rec.loss, double(batch.size()));
  rec.loss.gan_d = d_loss;
  rec.loss = losses::full_loss(rec.loss, cfg.weights);
  detail::require_finite(rec.loss, rec.step);

  g.scale(inv_b);
  adam_step(st.params, g, st.adam, net::Part::kSegmentor, cfg.lr_seg, cfg);
  adam_step(st.params, g, st.adam, net::Part::kGenerator, cfg.lr_g, cfg);
  st.step = rec.step;
  st.rng_state = rng.state();
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

// ---------------------------------------------------------------------------
// Checkpoints.
//
// Layout (little-endian):
//   8 bytes   magic "SPCKPT\0\1"
//   u32       format version
//   u64       header length N
//   N bytes   JSON header: train config, config hash, step, rng state,
//             Adam update counts, parameter names and shapes
//   then, per parameter in header order: values, Adam m, Adam v (f32 each)

inline constexpr char kCheckpointMagic[8] = {'S', 'P', 'C', 'K', 'P', 'T', '\0', '\1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  TrainConfig config;
  TrainState state;
};

namespace detail {

template <typename V>
void put_raw(std::string& out, const V& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename V>
void put_floats(std::string& out, const V& v) {
  out.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
}

}  // namespace detail

inline std::string checkpoint_bytes(const TrainConfig& cfg, const TrainState& st) {
  nlohmann::json params = nlohmann::json::array();
  for (const auto& e : st.params) params.push_back({{"name", e.name}, {"shape", e.shape}});
  const nlohmann::json header = {{"train_config", cfg},
                                 {"config_hash", config_hash(cfg)},
                                 {"step", st.step},
                                 {"rng_state", st.rng_state},
                                 {"adam_t", st.adam.t},
                                 {"params", params}};
  const std::string h = header.dump();
  std::string out(kCheckpointMagic, sizeof kCheckpointMagic);
  detail::put_raw(out, kCheckpointVersion);
  detail::put_raw(out, static_cast<std::uint64_t>(h.size()));
  out += h;
  for (std::size_t i = 0; i < st.params.size(); ++i) {
    detail::put_floats(out, st.params[i].value.data);
    detail::put_floats(out, st.adam.m[i]);
    detail::put_floats(out, st.adam.v[i]);
  }
  return out;
}

inline void save_checkpoint(const std::filesystem::path& path, const TrainConfig& cfg, const TrainState& st) {
  const std::string bytes = checkpoint_bytes(cfg, st);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint " + path.string());
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("cannot write checkpoint " + path.string());
}

inline Checkpoint parse_checkpoint(const std::string& bytes, const std::string& origin = "checkpoint") {
  auto corrupt = [&](const std::string& why) { return IoError("corrupt checkpoint " + origin + ": " + why); };
  std::size_t pos = 0;
  auto take = [&](void* dst, std::size_t n) {
    if (bytes.size() - pos < n) throw corrupt("truncated");
    std::memcpy(dst, bytes.data() + pos, n);
    pos += n;
  };
  char magic[8];
  if (bytes.size() < sizeof magic) throw corrupt("truncated");
  take(magic, sizeof magic);
  if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) throw corrupt("bad magic");
  std::uint32_t version = 0;
  take(&version, sizeof version);
  if (version != kCheckpointVersion)
    throw Error("checkpoint " + origin + " has version " + std::to_string(version) + ", expected " +
                std::to_string(kCheckpointVersion));
  std::uint64_t hlen = 0;
  take(&hlen, sizeof hlen);
  if (hlen > bytes.size() - pos) throw corrupt("truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw corrupt(std::string("bad header: ") + e.what());
  }
  pos += hlen;

  Checkpoint ck;
  try {
    ck.config = header.at("train_config").get<TrainConfig>();
    if (header.at("config_hash").get<std::string>() != config_hash(ck.config)) throw corrupt("config hash mismatch");
    ck.state.step = header.at("step").get<long>();
    ck.state.rng_state = header.at("rng_state").get<std::string>();
    ck.state.adam.t = header.at("adam_t").get<std::array<long, 3>>();
    ck.config.validate();
    ck.state.params = net::declare_params<float>(ck.config.net);
    const auto& names = header.at("params");
    if (names.size() != ck.state.params.size()) throw corrupt("parameter count does not match its network config");
    for (std::size_t i = 0; i < names.size(); ++i) {
      const auto& e = ck.state.params[i];
      if (names[i].at("name").get<std::string>() != e.name || names[i].at("shape").get<std::vector<int>>() != e.shape)
        throw corrupt("parameter " + e.name + " does not match its network config");
    }
  } catch (const nlohmann::json::exception& e) {
    throw corrupt(std::string("bad header: ") + e.what());
  }
  ck.state.adam.m.resize(ck.state.params.size());
  ck.state.adam.v.resize(ck.state.params.size());
  for (std::size_t i = 0; i < ck.state.params.size(); ++i) {
    auto& w = ck.state.params[i].value.data;
    ck.state.adam.m[i].resize(w.size());
    ck.state.adam.v[i].resize(w.size());
    take(w.data(), w.size() * sizeof(float));
    for (auto* v : {&ck.state.adam.m[i], &ck.state.adam.v[i]}) take(v->data(), v->size() * sizeof(float));
  }
  if (pos != bytes.size()) throw corrupt("trailing bytes");
  return ck;
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("missing checkpoint " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_checkpoint(ss.str(), path.string());
}

// ---------------------------------------------------------------------------
// Training loop.

struct RunOptions {
  std::ostream* log = nullptr;  // JSON lines, one per step
  long stop_after = -1;         // stop once this many steps are complete (-1: run to the end)
  // Called every cfg.checkpoint_every steps and at the end of the run.
  std::function<void(const TrainState&)> on_checkpoint;
};

// Runs (or resumes) training until the schedule or `stop_after` is reached.
inline TrainState train(const TrainConfig& cfg, const std::vector<scene::Sample>& data, TrainState st,
                        const RunOptions& opt = {}) {
  cfg.validate();
  if (data.empty()) throw TrainError("training set is empty");
  for (const auto& s : data) {
    if (maskops::count(maskops::mask_and(s.sv, s.si)) != 0 || maskops::mask_or(s.sv, s.si) != s.sf)
      throw TrainError("dataset invariant violated for object " + std::to_string(s.object_id));
  }
  const long end = opt.stop_after >= 0 ? std::min(opt.stop_after, cfg.total_steps()) : cfg.total_steps();
  while (st.step < end) {
    const StepRecord r = train_step(cfg, data, st);
    if (opt.log) *opt.log << to_json(r).dump() << '\n' << std::flush;
    if (opt.on_checkpoint && cfg.checkpoint_every > 0 && st.step % cfg.checkpoint_every == 0 && st.step < end)
      opt.on_checkpoint(st);
  }
  if (opt.on_checkpoint) opt.on_checkpoint(st);
  return st;
}

inline TrainState train(const TrainConfig& cfg, const std::vector<scene::Sample>& data, const RunOptions& opt = {}) {
  return train(cfg, data, init_state(cfg), opt);
}

// Loads every sample of one split.
inline std::vector<scene::Sample> load_split(const scene::DatasetManifest& m, const std::string& split) {
  std::vector<scene::Sample> out;
  for (int i : m.split_indices(split)) out.push_back(scene::load_sample(m, i));
  return out;
}

}  // namespace segpaint::train
