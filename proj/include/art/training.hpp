// Copyright 2026 The artrecon Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// Losses, schedules and the optimizer loop. Rendering losses compare per-part
// renders of the predicted fields, placed by the predicted articulation, with
// per-part ground truth; articulation terms supervise the remapped vector
// directly.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "art/datagen.hpp"
#include "art/model.hpp"
#include "art/renderer.hpp"

namespace art {

struct LossWeights {
  double w_rgb = 1.0;
  double w_mask = 1.0;
  double w_type = 0.05;
  double w_box = 1.0;
  double w_axis = 0.5;
  double w_pivot = 1.0;
  double w_dyn = 1.0;
  double w_composite = 0.0;

  void validate() const {
    for (double w : {w_rgb, w_mask, w_type, w_box, w_axis, w_pivot, w_dyn, w_composite})
      if (!(std::isfinite(w) && w >= 0.0)) throw ConfigError("loss weights must be finite and >= 0");
  }
};

inline void to_json(nlohmann::json& j, const LossWeights& w) {
  j = {{"w_rgb", w.w_rgb},     {"w_mask", w.w_mask},   {"w_type", w.w_type},
       {"w_box", w.w_box},     {"w_axis", w.w_axis},   {"w_pivot", w.w_pivot},
       {"w_dyn", w.w_dyn},     {"w_composite", w.w_composite}};
}

namespace detail {
inline void reject_unknown(const nlohmann::json& j, std::initializer_list<const char*> known,
                           const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}
}  // namespace detail

inline void from_json(const nlohmann::json& j, LossWeights& w) {
  detail::reject_unknown(j, {"w_rgb", "w_mask", "w_type", "w_box", "w_axis", "w_pivot", "w_dyn",
                             "w_composite"},
                         "loss weights");
  auto get = [&](const char* k, double& v) {
    if (!j.contains(k)) return;
    try {
      j.at(k).get_to(v);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("loss weights: bad value for '") + k + "': " + e.what());
    }
  };
  get("w_rgb", w.w_rgb);
  get("w_mask", w.w_mask);
  get("w_type", w.w_type);
  get("w_box", w.w_box);
  get("w_axis", w.w_axis);
  get("w_pivot", w.w_pivot);
  get("w_dyn", w.w_dyn);
  get("w_composite", w.w_composite);
}

struct TrainConfig {
  double lr = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.95;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  int warmup_steps = 100;
  double lr_final_ratio = 1.0;  // cosine decay after warmup to lr * ratio; 1 keeps lr constant
  int steps = 3000;
  int res_low = 16;
  int res_high = 32;
  int res_switch_step = 1000;  // first step supervised at res_high
  double inv_beta_start = 20.0;
  double inv_beta_end = 200.0;
  int beta_steps = 0;  // 0: anneal over `steps`
  int batch = 1;
  std::uint64_t seed = 0;
  int n_samples = 24;
  int rays_per_image = 0;  // 0: every pixel
  bool jitter = true;
  bool pretrain = false;   // rendering + box losses only
  bool sign_align = true;
  bool render_truth_articulation = false;  // place parts by ground truth instead of prediction
  double grad_clip = 1.0;  // global norm; 0 disables
  int log_every = 50;
  int eval_every = 0;  // full-image training-view PSNR; 0 disables
  int eval_samples = 48;
  LossWeights weights;

  BetaSchedule beta_schedule() const {
    return BetaSchedule{inv_beta_start, inv_beta_end, beta_steps > 0 ? beta_steps : steps};
  }
  int resolution_at(int step) const { return step >= res_switch_step ? res_high : res_low; }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("train config: " + m); };
    if (!(lr >= 0.0)) fail("lr must be >= 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0))
      fail("adam betas must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
    if (steps < 0 || warmup_steps < 0) fail("step counts must be >= 0");
    if (!(lr_final_ratio >= 0.0 && lr_final_ratio <= 1.0)) fail("lr_final_ratio must lie in [0, 1]");
    if (res_low < 1 || res_high < res_low) fail("need 1 <= res_low <= res_high");
    if (batch < 1) fail("batch must be >= 1");
    if (n_samples < 2) fail("n_samples must be >= 2");
    if (rays_per_image < 0) fail("rays_per_image must be >= 0");
    if (!(grad_clip >= 0.0)) fail("grad_clip must be >= 0");
    if (log_every < 1) fail("log_every must be >= 1");
    beta_schedule().validate();
    weights.validate();
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"lr", c.lr},
       {"adam_beta1", c.adam_beta1},
       {"adam_beta2", c.adam_beta2},
       {"adam_eps", c.adam_eps},
       {"weight_decay", c.weight_decay},
       {"warmup_steps", c.warmup_steps},
       {"lr_final_ratio", c.lr_final_ratio},
       {"steps", c.steps},
       {"res_low", c.res_low},
       {"res_high", c.res_high},
       {"res_switch_step", c.res_switch_step},
       {"inv_beta_start", c.inv_beta_start},
       {"inv_beta_end", c.inv_beta_end},
       {"beta_steps", c.beta_steps},
       {"batch", c.batch},
       {"seed", c.seed},
       {"n_samples", c.n_samples},
       {"rays_per_image", c.rays_per_image},
       {"jitter", c.jitter},
       {"pretrain", c.pretrain},
       {"sign_align", c.sign_align},
       {"render_truth_articulation", c.render_truth_articulation},
       {"grad_clip", c.grad_clip},
       {"log_every", c.log_every},
       {"eval_every", c.eval_every},
       {"eval_samples", c.eval_samples},
       {"weights", c.weights}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  detail::reject_unknown(
      j, {"lr", "adam_beta1", "adam_beta2", "adam_eps", "weight_decay", "warmup_steps", "lr_final_ratio", "steps",
          "res_low", "res_high", "res_switch_step", "inv_beta_start", "inv_beta_end", "beta_steps",
          "batch", "seed", "n_samples", "rays_per_image", "jitter", "pretrain", "sign_align",
          "render_truth_articulation", "grad_clip", "log_every", "eval_every", "eval_samples",
          "weights"},
      "train config");
  auto get = [&](const char* k, auto& v) {
    if (!j.contains(k)) return;
    try {
      j.at(k).get_to(v);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("train config: bad value for '") + k + "': " + e.what());
    }
  };
  get("lr", c.lr);
  get("adam_beta1", c.adam_beta1);
  get("adam_beta2", c.adam_beta2);
  get("adam_eps", c.adam_eps);
  get("weight_decay", c.weight_decay);
  get("warmup_steps", c.warmup_steps);
  get("lr_final_ratio", c.lr_final_ratio);
  get("steps", c.steps);
  get("res_low", c.res_low);
  get("res_high", c.res_high);
  get("res_switch_step", c.res_switch_step);
  get("inv_beta_start", c.inv_beta_start);
  get("inv_beta_end", c.inv_beta_end);
  get("beta_steps", c.beta_steps);
  get("batch", c.batch);
  get("seed", c.seed);
  get("n_samples", c.n_samples);
  get("rays_per_image", c.rays_per_image);
  get("jitter", c.jitter);
  get("pretrain", c.pretrain);
  get("sign_align", c.sign_align);
  get("render_truth_articulation", c.render_truth_articulation);
  get("grad_clip", c.grad_clip);
  get("log_every", c.log_every);
  get("eval_every", c.eval_every);
  get("eval_samples", c.eval_samples);
  get("weights", c.weights);
}

// ---------------------------------------------------------------------------
// Rendering loss

/// A learned part taking part in a differentiable render.
template <typename T>
struct DiffPart {
  const HexaPlane<T>* planes = nullptr;
  ArticulationParams params;
  HexaPlane<T>* d_planes = nullptr;
};

struct RenderError {
  double rgb_sse = 0.0;
  double mask_sse = 0.0;
  int pixels = 0;
};

/// Renders `pixels` of `cam` through the merged samples of `parts`, compares
/// against the targets and back-propagates
///   g_rgb * sum |rgb - gt|^2 + g_mask * sum (mask - gt_mask)^2
/// into the part plane gradients and the shared head gradients. Pose is held
/// constant. `gt_mask` may be null (rgb only).
template <typename T>
RenderError render_loss(std::span<DiffPart<T>> parts, const FieldHeads<T>& heads, int state,
                        double radius, const Camera& cam, const Image& gt_rgb,
                        const Image* gt_mask, std::span<const int> pixels,
                        const RenderOptions& opts, double g_rgb, double g_mask,
                        FieldHeads<T>& d_heads) {
  require(!parts.empty(), "render_loss: need at least one part");
  require(gt_rgb.width == cam.width && gt_rgb.height == cam.height, "render_loss: target size");
  const double inv_beta = opts.inv_beta;
  const double beta = 1.0 / inv_beta;
  const std::vector<Ray> rays = camera_rays(cam, pixels);
  std::vector<std::uint64_t> keys(pixels.begin(), pixels.end());
  const std::size_t P = parts.size();
  std::vector<PartSamples> samples(P);
  std::vector<FieldBatch<T>> fields(P);
  for (std::size_t p = 0; p < P; ++p) {
    samples[p] = sample_part(parts[p].params, state, radius, rays, keys, opts);
    if (samples[p].size() > 0)
      fields[p].evaluate(*parts[p].planes, heads, samples[p].x_local, 0.5 * parts[p].params.box_size,
                         radius, true);
  }
  std::vector<std::vector<double>> d_sdf(P);
  std::vector<std::vector<Vec3>> d_rgb(P);
  for (std::size_t p = 0; p < P; ++p) {
    d_sdf[p].assign(samples[p].size(), 0.0);
    d_rgb[p].assign(samples[p].size(), Vec3::Zero());
  }

  struct Tagged {
    CompositeSample s;
    int part;
    int index;
  };
  RenderError err;
  err.pixels = static_cast<int>(pixels.size());
  std::vector<Tagged> tagged;
  std::vector<CompositeSample> merged;
  std::vector<double> d_tau;
  std::vector<Vec3> d_col;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    tagged.clear();
    for (std::size_t p = 0; p < P; ++p) {
      const PartSamples& ps = samples[p];
      for (int i = ps.offsets[r]; i < ps.offsets[r + 1]; ++i) {
        CompositeSample c;
        c.t = ps.t[i];
        c.delta = ps.delta[i];
        c.sigma = density(fields[p].sdf[i], beta);
        c.ext = c.sigma * inv_beta;
        c.rgb = fields[p].rgb[i];
        tagged.push_back({c, static_cast<int>(p), i});
      }
    }
    if (P > 1)
      std::sort(tagged.begin(), tagged.end(), [](const Tagged& a, const Tagged& b) {
        if (composite_less(a.s, b.s)) return true;
        if (composite_less(b.s, a.s)) return false;
        return a.part < b.part;
      });
    merged.resize(tagged.size());
    for (std::size_t i = 0; i < tagged.size(); ++i) merged[i] = tagged[i].s;
    const RayColor rc = composite(merged);
    const int px = pixels[r];
    Vec3 e;
    for (int k = 0; k < 3; ++k) e[k] = rc.rgb[k] - gt_rgb.data[3 * px + k];
    const double em = gt_mask ? rc.mask - gt_mask->data[px] : 0.0;
    err.rgb_sse += e.squaredNorm();
    err.mask_sse += em * em;
    if (tagged.empty()) continue;
    d_tau.resize(merged.size());
    d_col.resize(merged.size());
    composite_backward(merged, 2.0 * g_rgb * e, gt_mask ? 2.0 * g_mask * em : 0.0, d_tau, d_col);
    for (std::size_t i = 0; i < tagged.size(); ++i) {
      const Tagged& tg = tagged[i];
      const double s = fields[tg.part].sdf[tg.index];
      d_sdf[tg.part][tg.index] += d_tau[i] * tg.s.delta * inv_beta * density_grad(s, beta);
      d_rgb[tg.part][tg.index] += d_col[i];
    }
  }
  for (std::size_t p = 0; p < P; ++p)
    if (samples[p].size() > 0) fields[p].backward(heads, d_sdf[p], d_rgb[p], *parts[p].d_planes, &d_heads);
  return err;
}

// ---------------------------------------------------------------------------
// Articulation loss

struct ArticulationTerms {
  double type = 0.0;  // cross-entropy, floor > 0 at finite logits
  double box = 0.0;
  double axis = 0.0;
  double pivot = 0.0;
  double dyn = 0.0;
};

/// Unweighted articulation terms of one slot; gradients of
/// scale * (weighted terms) are added to d_raw. Slot 0 only carries the box term.
inline ArticulationTerms articulation_loss(std::span<const double> raw,
                                           const ArticulationParams& truth, int slot,
                                           double radius, const LossWeights& w, bool pretrain,
                                           bool sign_align, double scale, std::span<double> d_raw) {
  using namespace raw_layout;
  const int T = truth.state_count();
  if (static_cast<int>(raw.size()) != articulation_width(T))
    throw DataError("articulation loss: raw width does not match the state count");
  ArticulationTerms out;
  const ArticulationParams pred = remap_articulation(raw, T, radius, slot);
  auto dsig = [&](int i) {
    const double s = open_sigmoid(raw[i]);
    return s * (1.0 - s);
  };
  // Box: center and size, mean over six coordinates.
  for (int i = 0; i < 3; ++i) {
    const double ec = pred.box_center[i] - truth.box_center[i];
    const double es = pred.box_size[i] - truth.box_size[i];
    out.box += (ec * ec + es * es) / 6.0;
    d_raw[kCenter + i] += scale * w.w_box * (2.0 * ec / 6.0) * 2.0 * radius * dsig(kCenter + i);
    d_raw[kSize + i] += scale * w.w_box * (2.0 * es / 6.0) * 2.0 * radius * dsig(kSize + i);
  }
  if (slot == 0 || pretrain) return out;
  if (truth.motion == MotionType::Static) throw DataError("articulation loss: movable slot has a static target");

  // Motion type: softmax cross-entropy over (prismatic, revolute).
  const double l0 = raw[kLogits], l1 = raw[kLogits + 1];
  const double mx = std::max(l0, l1);
  const double lse = mx + std::log(std::exp(l0 - mx) + std::exp(l1 - mx));
  const int target = truth.motion == MotionType::Revolute ? 1 : 0;
  out.type = lse - (target == 1 ? l1 : l0);
  const double p1 = std::exp(l1 - lse);
  d_raw[kLogits] += scale * w.w_type * ((1.0 - p1) - (target == 0 ? 1.0 : 0.0));
  d_raw[kLogits + 1] += scale * w.w_type * (p1 - (target == 1 ? 1.0 : 0.0));

  // Axis: compared up to sign; a flipped axis also flips the dynamics target.
  const Vec3 a_raw(raw[kAxis], raw[kAxis + 1], raw[kAxis + 2]);
  const double n = a_raw.norm();
  const Vec3 a = pred.axis_dir;
  const double e_pos = (a - truth.axis_dir).squaredNorm() / 3.0;
  const double e_neg = (a + truth.axis_dir).squaredNorm() / 3.0;
  const double sign = sign_align && e_neg < e_pos ? -1.0 : 1.0;
  const Vec3 target_axis = sign * truth.axis_dir;
  out.axis = (a - target_axis).squaredNorm() / 3.0;
  const Vec3 d_a = 2.0 * (a - target_axis) / 3.0;
  const Vec3 d_axis_raw = (d_a - a * a.dot(d_a)) / n;
  for (int i = 0; i < 3; ++i) d_raw[kAxis + i] += scale * w.w_axis * d_axis_raw[i];

  for (int i = 0; i < 3; ++i) {
    const double ep = pred.axis_point[i] - truth.axis_point[i];
    out.pivot += ep * ep / 3.0;
    d_raw[kPivot + i] += scale * w.w_pivot * (2.0 * ep / 3.0) * 2.0 * radius * dsig(kPivot + i);
  }
  for (int t = 0; t < T; ++t) {
    const double ed = pred.dynamics[t] - sign * truth.dynamics[t];
    out.dyn += ed * ed / T;
    d_raw[kDynamics + t] += scale * w.w_dyn * (2.0 * ed / T) * 2.0 * dsig(kDynamics + t);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer

/// AdamW with decoupled weight decay and bias correction.
template <typename T>
void adamw_step(ParamStore<T>& params, double lr, const TrainConfig& cfg, int step) {
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, step + 1), c2 = 1.0 - std::pow(b2, step + 1);
  if (lr == 0.0) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      Param<T>& p = params[i];
      p.m = T(b1) * p.m + T(1.0 - b1) * p.grad;
      p.v = T(b2) * p.v + T(1.0 - b2) * p.grad.cwiseProduct(p.grad);
    }
    return;
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param<T>& p = params[i];
    p.m = T(b1) * p.m + T(1.0 - b1) * p.grad;
    p.v = T(b2) * p.v + T(1.0 - b2) * p.grad.cwiseProduct(p.grad);
    if (p.decay && cfg.weight_decay > 0.0) p.value *= T(1.0 - lr * cfg.weight_decay);
    const T step_size = T(lr / c1);
    const T eps = T(cfg.adam_eps);
    const T inv_c2 = T(1.0 / c2);
    p.value.array() -= step_size * p.m.array() / ((p.v.array() * inv_c2).sqrt() + eps);
  }
}

inline double learning_rate(const TrainConfig& cfg, int step) {
  if (step < cfg.warmup_steps) return cfg.lr * static_cast<double>(step + 1) / cfg.warmup_steps;
  if (cfg.lr_final_ratio == 1.0 || cfg.steps <= cfg.warmup_steps) return cfg.lr;
  const double u = std::min(1.0, static_cast<double>(step - cfg.warmup_steps) / (cfg.steps - cfg.warmup_steps));
  return cfg.lr * (cfg.lr_final_ratio + (1.0 - cfg.lr_final_ratio) * 0.5 * (1.0 + std::cos(kPi * u)));
}

template <typename T>
double grad_norm(const ParamStore<T>& params) {
  double s = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) s += params[i].grad.template cast<double>().squaredNorm();
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Training data

/// A scene prepared for training: tokenizer inputs and supervision images at
/// each resolution of the curriculum.
struct TrainScene {
  const SceneTruth* truth = nullptr;
  PatchInputs inputs;
  struct Level {
    int res = 0;
    std::vector<std::vector<Camera>> cams;                // [view][state]
    std::vector<std::vector<std::vector<Image>>> rgb, mask;  // [part][view][state]
    std::vector<std::vector<Image>> comp_rgb;              // [view][state]
  };
  std::vector<Level> levels;

  const Level& level(int res) const {
    for (const Level& l : levels)
      if (l.res == res) return l;
    throw ContractError("training scene has no level at resolution " + std::to_string(res));
  }
};

inline TrainScene prepare_scene(const SceneTruth& s, const ModelConfig& mcfg,
                                const std::vector<int>& resolutions,
                                const SemanticFeatureProvider* semantic = nullptr) {
  if (!s.has_images()) throw DataError("training scene has no images");
  if (s.frame.state_count != mcfg.state_count) throw DataError("scene state count differs from the model");
  if (s.frame.part_count > mcfg.slot_count) throw DataError("scene has more parts than slots");
  TrainScene ts;
  ts.truth = &s;
  ts.inputs = build_patch_inputs(s.composite_rgb, s.cameras, mcfg, semantic);
  const int full = s.resolution();
  for (int res : resolutions) {
    bool dup = false;
    for (const auto& l : ts.levels) dup = dup || l.res == res;
    if (dup) continue;
    if (res <= 0 || full % res != 0)
      throw ConfigError("render resolution " + std::to_string(res) + " does not divide " +
                        std::to_string(full));
    const int f = full / res;
    TrainScene::Level l;
    l.res = res;
    l.cams = s.cameras;
    for (auto& row : l.cams)
      for (Camera& c : row) c = c.resized(res, res);
    auto down = [&](const Image& img) { return f == 1 ? img : downsample(img, f); };
    l.rgb = s.part_rgb;
    l.mask = s.part_mask;
    for (auto& a : l.rgb)
      for (auto& b : a)
        for (Image& img : b) img = down(img);
    for (auto& a : l.mask)
      for (auto& b : a)
        for (Image& img : b) img = down(img);
    l.comp_rgb = s.composite_rgb;
    for (auto& a : l.comp_rgb)
      for (Image& img : a) img = down(img);
    ts.levels.push_back(std::move(l));
  }
  return ts;
}

struct LossBreakdown {
  double rgb = 0.0;
  double mask = 0.0;
  double composite = 0.0;
  double type = 0.0;
  double box = 0.0;
  double axis = 0.0;
  double pivot = 0.0;
  double dyn = 0.0;
  double total = 0.0;  // weighted sum including the cross-entropy term
  double total_without_type = 0.0;

  void add(const LossBreakdown& o, double f) {
    rgb += f * o.rgb;
    mask += f * o.mask;
    composite += f * o.composite;
    type += f * o.type;
    box += f * o.box;
    axis += f * o.axis;
    pivot += f * o.pivot;
    dyn += f * o.dyn;
    total += f * o.total;
    total_without_type += f * o.total_without_type;
  }
};

struct SceneLossOptions {
  int res = 32;
  double inv_beta = 200.0;
  int n_samples = 24;
  bool jitter = false;
  std::uint64_t seed = 0;
  int rays_per_image = 0;
  bool pretrain = false;
  bool sign_align = true;
  bool render_truth_articulation = false;
  double scale = 1.0;  // gradient multiplier (1 / batch)
};

/// Full per-scene objective. With `backward` set, gradients of
/// scale * total are accumulated into the model parameters.
template <typename T>
LossBreakdown scene_loss(ArtModel<T>& model, const TrainScene& scene, const LossWeights& w,
                         const SceneLossOptions& o, bool backward) {
  const SceneTruth& truth = *scene.truth;
  const int P = truth.frame.part_count, V = truth.views(), Tn = truth.frame.state_count;
  const double radius = truth.frame.radius;
  const ModelConfig& mcfg = model.config();
  Matrix<T> inputs = scene.inputs.features.template cast<T>();
  auto fwd = model.forward(inputs, scene.inputs.stage, P);

  LossBreakdown lb;
  std::vector<HexaPlane<T>> d_planes;
  for (int p = 0; p < P; ++p) d_planes.emplace_back(mcfg.plane_res, mcfg.feat_dim);
  std::vector<std::vector<double>> d_raw(P, std::vector<double>(mcfg.raw_articulation_width(), 0.0));
  const FieldHeads<T>& heads = fwd.parts[0].heads;
  FieldHeads<T> d_heads = FieldHeads<T>::zeros_like(heads);

  std::vector<ArticulationParams> placed(P);
  for (int p = 0; p < P; ++p)
    placed[p] = o.render_truth_articulation
                    ? truth.parts[p].articulation
                    : remap_articulation(fwd.parts[p].raw_articulation, Tn, radius, p);

  const TrainScene::Level& lvl = scene.level(o.res);
  const int n_pix = o.res * o.res;
  std::vector<int> all(n_pix);
  std::iota(all.begin(), all.end(), 0);
  RenderOptions ropt;
  ropt.inv_beta = o.inv_beta;
  ropt.n_samples = o.n_samples;
  ropt.jitter = o.jitter;
  auto pick = [&](std::uint64_t key) {
    if (o.rays_per_image <= 0 || o.rays_per_image >= n_pix) return all;
    std::vector<int> px = all;
    std::mt19937_64 rng(mix_seed(o.seed, key));
    std::shuffle(px.begin(), px.end(), rng);
    px.resize(o.rays_per_image);
    std::sort(px.begin(), px.end());
    return px;
  };
  const double n_img = static_cast<double>(P) * V * Tn;
  for (int p = 0; p < P; ++p)
    for (int v = 0; v < V; ++v)
      for (int t = 0; t < Tn; ++t) {
        const std::uint64_t key = (static_cast<std::uint64_t>(p) * V + v) * Tn + t;
        const std::vector<int> px = pick(key);
        ropt.seed = mix_seed(o.seed, key + 0x100);
        const double npx = static_cast<double>(px.size());
        const double g_rgb = backward ? o.scale * w.w_rgb / (3.0 * npx * n_img) : 0.0;
        const double g_mask = backward ? o.scale * w.w_mask / (npx * n_img) : 0.0;
        DiffPart<T> dp{&fwd.parts[p].hexaplane, placed[p], &d_planes[p]};
        const RenderError e = render_loss<T>(std::span<DiffPart<T>>(&dp, 1), heads, t, radius,
                                             lvl.cams[v][t], lvl.rgb[p][v][t], &lvl.mask[p][v][t],
                                             px, ropt, g_rgb, g_mask, d_heads);
        lb.rgb += e.rgb_sse / (3.0 * npx * n_img);
        lb.mask += e.mask_sse / (npx * n_img);
      }
  if (w.w_composite > 0.0) {
    for (int v = 0; v < V; ++v)
      for (int t = 0; t < Tn; ++t) {
        const std::uint64_t key = 0x10000 + static_cast<std::uint64_t>(v) * Tn + t;
        const std::vector<int> px = pick(key);
        ropt.seed = mix_seed(o.seed, key + 0x100);
        const double npx = static_cast<double>(px.size());
        const double g = backward ? o.scale * w.w_composite / (3.0 * npx * V * Tn) : 0.0;
        std::vector<DiffPart<T>> dps;
        for (int p = 0; p < P; ++p) dps.push_back({&fwd.parts[p].hexaplane, placed[p], &d_planes[p]});
        const RenderError e = render_loss<T>(dps, heads, t, radius, lvl.cams[v][t], lvl.comp_rgb[v][t],
                                             nullptr, px, ropt, g, 0.0, d_heads);
        lb.composite += e.rgb_sse / (3.0 * npx * V * Tn);
      }
  }

  const int movable = std::max(1, P - 1);
  for (int p = 0; p < P; ++p) {
    // Box term averages over every part, the rest over movable parts.
    LossWeights wp = w;
    const double part_scale = backward ? o.scale : 0.0;
    wp.w_box = w.w_box / P;
    wp.w_type = w.w_type / movable;
    wp.w_axis = w.w_axis / movable;
    wp.w_pivot = w.w_pivot / movable;
    wp.w_dyn = w.w_dyn / movable;
    const ArticulationTerms at = articulation_loss(fwd.parts[p].raw_articulation, truth.parts[p].articulation,
                                                   p, radius, wp, o.pretrain, o.sign_align, part_scale,
                                                   d_raw[p]);
    lb.box += at.box / P;
    if (p > 0) {
      lb.type += at.type / movable;
      lb.axis += at.axis / movable;
      lb.pivot += at.pivot / movable;
      lb.dyn += at.dyn / movable;
    }
  }
  lb.total_without_type = w.w_rgb * lb.rgb + w.w_mask * lb.mask + w.w_composite * lb.composite +
                          w.w_box * lb.box + w.w_axis * lb.axis + w.w_pivot * lb.pivot +
                          w.w_dyn * lb.dyn;
  lb.total = lb.total_without_type + w.w_type * lb.type;
  if (!std::isfinite(lb.total)) throw NumericError("training loss is not finite");
  if (backward) {
    model.accumulate_head_grads(d_heads);
    model.backward(fwd, d_planes, d_raw);
  }
  return lb;
}

/// Decodes a scene with the model: predicted parts with articulation remapped.
template <typename T>
struct Prediction {
  std::vector<PartSlotOutput<T>> slots;
  std::vector<ArticulationParams> params;
};

template <typename T>
Prediction<T> predict(ArtModel<T>& model, const PatchInputs& inputs, int part_count, double radius) {
  auto fwd = model.forward(inputs.features.template cast<T>(), inputs.stage, part_count);
  Prediction<T> out;
  for (int p = 0; p < part_count; ++p)
    out.params.push_back(remap_articulation(fwd.parts[p].raw_articulation, model.config().state_count,
                                            radius, p));
  out.slots = std::move(fwd.parts);
  return out;
}

/// Full-image render of each predicted part in isolation.
template <typename T>
RenderOutput render_predicted_part(const Prediction<T>& pred, int part, int state, const Camera& cam,
                                   double radius, const RenderOptions& opts) {
  return render_part(pred.slots[part].hexaplane, pred.slots[part].heads, pred.params[part], state, cam,
                     radius, opts);
}

template <typename T>
RenderOutput render_predicted(const Prediction<T>& pred, int state, const Camera& cam, double radius,
                              const RenderOptions& opts) {
  std::vector<LearnedField<T>> fields;
  fields.reserve(pred.slots.size());
  for (std::size_t p = 0; p < pred.slots.size(); ++p)
    fields.emplace_back(pred.slots[p].hexaplane, pred.slots[p].heads, 0.5 * pred.params[p].box_size, radius);
  std::vector<RenderPart> rp;
  for (std::size_t p = 0; p < pred.slots.size(); ++p) rp.push_back({&fields[p], pred.params[p]});
  return render_composite(rp, state, cam, radius, opts);
}

inline double image_psnr(const Image& a, const Image& b) {
  require(a.same_shape(b), "psnr: image shapes differ");
  double se = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.data.size());
  if (mse <= 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

/// Mean PSNR of per-part renders against per-part ground truth over the
/// training views and states, at the stored image resolution.
template <typename T>
double training_view_psnr(ArtModel<T>& model, const TrainScene& scene, double inv_beta, int n_samples) {
  const SceneTruth& s = *scene.truth;
  const Prediction<T> pred = predict(model, scene.inputs, s.frame.part_count, s.frame.radius);
  RenderOptions ro;
  ro.inv_beta = inv_beta;
  ro.n_samples = n_samples;
  double sum = 0.0;
  int n = 0;
  for (int p = 0; p < s.frame.part_count; ++p)
    for (int v = 0; v < s.views(); ++v)
      for (int t = 0; t < s.frame.state_count; ++t) {
        const RenderOutput o = render_predicted_part(pred, p, t, s.cameras[v][t], s.frame.radius, ro);
        sum += image_psnr(o.rgb, s.part_rgb[p][v][t]);
        ++n;
      }
  return sum / n;
}

// ---------------------------------------------------------------------------
// Loop

struct StepRecord {
  int step = 0;
  LossBreakdown loss;
  double inv_beta = 0.0;
  int res = 0;
  double lr = 0.0;
  double grad_norm = 0.0;
  double psnr = -1.0;  // < 0 when not evaluated
};

inline nlohmann::json step_json(const StepRecord& r) {
  nlohmann::json j{{"step", r.step},          {"loss", r.loss.total},
                   {"rgb", r.loss.rgb},       {"mask", r.loss.mask},
                   {"composite", r.loss.composite},
                   {"type", r.loss.type},     {"box", r.loss.box},
                   {"axis", r.loss.axis},     {"pivot", r.loss.pivot},
                   {"dyn", r.loss.dyn},       {"inv_beta", r.inv_beta},
                   {"beta", 1.0 / r.inv_beta}, {"res", r.res},
                   {"lr", r.lr},              {"grad_norm", r.grad_norm}};
  if (r.psnr >= 0.0) j["psnr"] = r.psnr;
  return j;
}

template <typename T>
class Trainer {
 public:
  Trainer(ArtModel<T>& model, std::vector<TrainScene> scenes, TrainConfig cfg)
      : model_(model), scenes_(std::move(scenes)), cfg_(std::move(cfg)), rng_(mix_seed(cfg_.seed, 0x7a1)) {
    cfg_.validate();
    if (scenes_.empty()) throw DataError("training needs at least one scene");
    for (const TrainScene& s : scenes_) {
      s.level(cfg_.res_low);
      s.level(cfg_.res_high);
    }
  }

  const TrainConfig& config() const { return cfg_; }
  int step() const { return step_; }
  const std::vector<TrainScene>& scenes() const { return scenes_; }

  /// One optimizer step over `batch` scenes.
  StepRecord run_step() {
    StepRecord rec;
    rec.step = step_;
    rec.res = cfg_.resolution_at(step_);
    rec.inv_beta = 1.0 / anneal_beta(cfg_.beta_schedule(), step_);
    rec.lr = learning_rate(cfg_, step_);
    model_.params().zero_grad();
    for (int b = 0; b < cfg_.batch; ++b) {
      const int idx = next_scene();
      SceneLossOptions o;
      o.res = rec.res;
      o.inv_beta = rec.inv_beta;
      o.n_samples = cfg_.n_samples;
      o.jitter = cfg_.jitter;
      o.seed = mix_seed(cfg_.seed, static_cast<std::uint64_t>(step_) * 131 + b);
      o.rays_per_image = cfg_.rays_per_image;
      o.pretrain = cfg_.pretrain;
      o.sign_align = cfg_.sign_align;
      o.render_truth_articulation = cfg_.render_truth_articulation;
      o.scale = 1.0 / cfg_.batch;
      rec.loss.add(scene_loss(model_, scenes_[idx], cfg_.weights, o, true), 1.0 / cfg_.batch);
    }
    rec.grad_norm = grad_norm(model_.params());
    if (!std::isfinite(rec.grad_norm)) throw NumericError("non-finite gradient at step " + std::to_string(step_));
    if (cfg_.grad_clip > 0.0 && rec.grad_norm > cfg_.grad_clip) {
      const T f = T(cfg_.grad_clip / rec.grad_norm);
      for (std::size_t i = 0; i < model_.params().size(); ++i) model_.params()[i].grad *= f;
    }
    adamw_step(model_.params(), rec.lr, cfg_, step_);
    ++step_;
    return rec;
  }

  /// Runs to cfg.steps, writing one JSON line per logged step. `on_step` sees
  /// every record (e.g. for checkpointing). A non-finite loss writes
  /// `dump` (when given) and rethrows.
  void run(std::ostream* log, const std::function<void(const StepRecord&)>& on_step = {},
           const std::function<void(const nlohmann::json&)>& dump = {}) {
    while (step_ < cfg_.steps) {
      StepRecord rec;
      try {
        rec = run_step();
      } catch (const NumericError& e) {
        if (dump) dump(diagnostic(e.what()));
        throw;
      }
      const bool last = step_ == cfg_.steps;
      if (cfg_.eval_every > 0 && (step_ % cfg_.eval_every == 0 || last))
        rec.psnr = mean_training_psnr(1.0 / anneal_beta(cfg_.beta_schedule(), step_));
      if (log && (rec.step % cfg_.log_every == 0 || last || rec.psnr >= 0.0))
        *log << step_json(rec).dump() << "\n" << std::flush;
      if (on_step) on_step(rec);
    }
  }

  double mean_training_psnr(double inv_beta) {
    double s = 0.0;
    for (const TrainScene& sc : scenes_) s += training_view_psnr(model_, sc, inv_beta, cfg_.eval_samples);
    return s / scenes_.size();
  }

 private:
  int next_scene() {
    if (order_pos_ >= order_.size()) {
      order_.resize(scenes_.size());
      std::iota(order_.begin(), order_.end(), 0);
      std::shuffle(order_.begin(), order_.end(), rng_);
      order_pos_ = 0;
    }
    return order_[order_pos_++];
  }

  nlohmann::json diagnostic(const std::string& what) {
    nlohmann::json bad = nlohmann::json::array();
    for (std::size_t i = 0; i < model_.params().size(); ++i) {
      const Param<T>& p = model_.params()[i];
      if (!p.value.allFinite() || !p.grad.allFinite()) bad.push_back(p.name);
    }
    return {{"error", what}, {"step", step_}, {"non_finite_params", bad},
            {"inv_beta", 1.0 / anneal_beta(cfg_.beta_schedule(), step_)},
            {"res", cfg_.resolution_at(step_)}};
  }

  ArtModel<T>& model_;
  std::vector<TrainScene> scenes_;
  TrainConfig cfg_;
  std::mt19937_64 rng_;
  std::vector<int> order_;
  std::size_t order_pos_ = 0;
  int step_ = 0;
};

}  // namespace art
