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
// SDF volume rendering of posed parts. Rays are moved into each part's rest
// frame, clipped to the part box and sampled; samples of all parts are merged
// by ray distance and alpha-composited front to back.
#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <tuple>
#include <vector>

#include "art/field.hpp"
#include "art/geometry.hpp"
#include "art/image.hpp"
#include "art/kinematics.hpp"
#include "art/parallel.hpp"

namespace art {

/// Anything that maps part-local points in [-1,1]^3 to (sdf, rgb).
class FieldSource {
 public:
  virtual ~FieldSource() = default;
  virtual void evaluate(std::span<const Vec3> x_local, std::span<double> sdf,
                        std::span<Vec3> rgb) const = 0;
};

template <typename T>
class LearnedField final : public FieldSource {
 public:
  LearnedField(const HexaPlane<T>& planes, const FieldHeads<T>& heads, const Vec3& half_extent,
               double radius)
      : planes_(planes), heads_(heads), half_extent_(half_extent), radius_(radius) {}

  void evaluate(std::span<const Vec3> x_local, std::span<double> sdf,
                std::span<Vec3> rgb) const override {
    FieldBatch<T> batch;
    batch.evaluate(planes_, heads_, x_local, half_extent_, radius_, false);
    std::copy(batch.sdf.begin(), batch.sdf.end(), sdf.begin());
    std::copy(batch.rgb.begin(), batch.rgb.end(), rgb.begin());
  }

 private:
  const HexaPlane<T>& planes_;
  const FieldHeads<T>& heads_;
  Vec3 half_extent_;
  double radius_;
};

struct RenderPart {
  const FieldSource* field = nullptr;
  ArticulationParams params;
};

struct RenderOptions {
  double inv_beta = 200.0;
  int n_samples = 64;
  bool jitter = false;
  std::uint64_t seed = 0;
  int workers = 0;  // 0: worker_count()
  int rays_per_chunk = 512;
};

struct RenderOutput {
  Image rgb;
  Image mask;
  Image depth;
};

struct BetaSchedule {
  double inv_beta_start = 20.0;
  double inv_beta_end = 200.0;
  int total_steps = 1;

  void validate() const {
    if (!(inv_beta_start > 0.0 && inv_beta_end >= inv_beta_start))
      throw ConfigError("beta schedule needs inv_beta_end >= inv_beta_start > 0");
    if (total_steps < 0) throw ConfigError("beta schedule needs a non-negative length");
  }
};

/// 1/beta ramps linearly from start to end over total_steps, clamped outside.
inline double anneal_beta(const BetaSchedule& sched, int step) {
  sched.validate();
  const double f = sched.total_steps <= 0
                       ? 1.0
                       : std::clamp(static_cast<double>(step) / sched.total_steps, 0.0, 1.0);
  return 1.0 / (sched.inv_beta_start + f * (sched.inv_beta_end - sched.inv_beta_start));
}

// ---------------------------------------------------------------------------
// Sampling

/// Samples of one part for a bundle of rays; ray r owns [offsets[r], offsets[r+1]).
struct PartSamples {
  std::vector<int> offsets;
  std::vector<double> t;
  std::vector<double> delta;
  std::vector<Vec3> x_local;

  std::size_t size() const { return t.size(); }
};

inline AABB part_box(const ArticulationParams& p) { return AABB{p.box_center, p.box_size}; }

/// Ray keys seed the jitter stream of each ray so results do not depend on how
/// rays are batched.
inline PartSamples sample_part(const ArticulationParams& params, int state, double radius,
                               std::span<const Ray> rays, std::span<const std::uint64_t> keys,
                               const RenderOptions& opts) {
  const AABB box = part_box(params);
  if (!box.valid()) throw ContractError("render: degenerate part box");
  require(opts.n_samples >= 2, "render: need at least two samples per ray");
  const Vec3 half = 0.5 * box.size;
  const RigidPose to_rest = part_pose(params, state, radius).inverse();
  PartSamples out;
  out.offsets.reserve(rays.size() + 1);
  out.offsets.push_back(0);
  std::vector<double> ts;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    // Same map as inverse_transform_ray, with the pose factored out of the loop.
    const Ray local{to_rest.apply(rays[r].origin), to_rest.rotation * rays[r].dir};
    if (const auto hit = ray_aabb(local, box)) {
      const auto [t0, t1] = *hit;
      stratified_samples(t0, t1, opts.n_samples, opts.jitter, mix_seed(opts.seed, keys[r]), ts);
      for (int i = 0; i < opts.n_samples; ++i) {
        const double next = i + 1 < opts.n_samples ? ts[i + 1] : t1;
        out.t.push_back(ts[i]);
        out.delta.push_back(next - ts[i]);
        Vec3 x = (local.at(ts[i]) - box.center).cwiseQuotient(half);
        out.x_local.push_back(x.cwiseMax(-1.0).cwiseMin(1.0));
      }
    }
    out.offsets.push_back(static_cast<int>(out.t.size()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Compositing

struct CompositeSample {
  double t = 0.0;
  double delta = 0.0;
  double sigma = 0.0;  // Laplace-CDF density in [0, 1]
  double ext = 0.0;    // extinction used for opacity: sigma / beta
  Vec3 rgb = Vec3::Zero();
};

struct RayColor {
  Vec3 rgb = Vec3::Zero();
  double mask = 0.0;
  double depth = 0.0;
};

inline bool composite_less(const CompositeSample& a, const CompositeSample& b) {
  return std::tie(a.t, a.ext, a.rgb[0], a.rgb[1], a.rgb[2], a.delta) <
         std::tie(b.t, b.ext, b.rgb[0], b.rgb[1], b.rgb[2], b.delta);
}

/// Front-to-back weights w_i = T_i (1 - exp(-ext_i delta_i)).
inline void composite_weights(std::span<const CompositeSample> s, std::vector<double>& w) {
  w.resize(s.size());
  double log_trans = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double tau = s[i].ext * s[i].delta;
    w[i] = std::exp(-log_trans) * -std::expm1(-tau);
    log_trans += tau;
  }
}

inline RayColor composite(std::span<const CompositeSample> s) {
  RayColor out;
  double log_trans = 0.0;
  double wt = 0.0;
  for (const CompositeSample& c : s) {
    const double tau = c.ext * c.delta;
    const double w = std::exp(-log_trans) * -std::expm1(-tau);
    out.rgb += w * c.rgb;
    out.mask += w;
    wt += w * c.t;
    log_trans += tau;
  }
  out.depth = wt / std::max(out.mask, 1e-8);
  return out;
}

/// Gradients of the composited color/mask with respect to each sample's
/// optical depth tau = ext * delta and color. Uses the suffix form
/// dC/dtau_i = T_{i+1} c_i - sum_{k>i} w_k c_k, which stays finite when
/// samples become opaque.
inline void composite_backward(std::span<const CompositeSample> s, const Vec3& d_rgb,
                               double d_mask, std::span<double> d_tau, std::span<Vec3> d_color) {
  const std::size_t n = s.size();
  std::vector<double> w(n), trans_after(n);
  double log_trans = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double tau = s[i].ext * s[i].delta;
    w[i] = std::exp(-log_trans) * -std::expm1(-tau);
    log_trans += tau;
    trans_after[i] = std::exp(-log_trans);
  }
  double suffix = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double g = d_rgb.dot(s[k].rgb) + d_mask;
    d_tau[k] = trans_after[k] * g - suffix;
    d_color[k] = w[k] * d_rgb;
    suffix += w[k] * g;
  }
}

// ---------------------------------------------------------------------------
// Rendering

inline std::vector<Ray> camera_rays(const Camera& cam, std::span<const int> pixels) {
  std::vector<Ray> rays(pixels.size());
  for (std::size_t i = 0; i < pixels.size(); ++i)
    rays[i] = pixel_ray(cam, pixels[i] % cam.width, pixels[i] / cam.width);
  return rays;
}

/// Renders an arbitrary ray bundle through all parts.
inline std::vector<RayColor> render_rays(std::span<const RenderPart> parts, int state,
                                         double radius, std::span<const Ray> rays,
                                         std::span<const std::uint64_t> keys,
                                         const RenderOptions& opts) {
  require(!parts.empty(), "render: at least one part is required");
  require(opts.inv_beta > 0.0, "render: inverse beta must be positive");
  const double beta = 1.0 / opts.inv_beta;
  std::vector<PartSamples> samples;
  std::vector<std::vector<double>> sdf(parts.size());
  std::vector<std::vector<Vec3>> rgb(parts.size());
  samples.reserve(parts.size());
  for (std::size_t p = 0; p < parts.size(); ++p) {
    samples.push_back(sample_part(parts[p].params, state, radius, rays, keys, opts));
    sdf[p].resize(samples[p].size());
    rgb[p].resize(samples[p].size());
    if (samples[p].size() > 0) parts[p].field->evaluate(samples[p].x_local, sdf[p], rgb[p]);
  }
  std::vector<RayColor> out(rays.size());
  std::vector<CompositeSample> merged;
  for (std::size_t r = 0; r < rays.size(); ++r) {
    merged.clear();
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const PartSamples& ps = samples[p];
      for (int i = ps.offsets[r]; i < ps.offsets[r + 1]; ++i) {
        CompositeSample c;
        c.t = ps.t[i];
        c.delta = ps.delta[i];
        c.sigma = density(sdf[p][i], beta);
        c.ext = c.sigma * opts.inv_beta;
        c.rgb = rgb[p][i];
        merged.push_back(c);
      }
    }
    if (parts.size() > 1) std::sort(merged.begin(), merged.end(), composite_less);
    out[r] = composite(merged);
  }
  return out;
}

/// Renders every pixel of `cam` with all parts posed at `state`. Output is
/// independent of the worker count: each chunk writes its own pixels and the
/// jitter stream is keyed by pixel index.
inline RenderOutput render_composite(std::span<const RenderPart> parts, int state,
                                     const Camera& cam, double radius,
                                     const RenderOptions& opts) {
  cam.validate();
  RenderOutput out{Image(cam.width, cam.height, 3), Image(cam.width, cam.height, 1),
                   Image(cam.width, cam.height, 1)};
  const int n_pix = cam.width * cam.height;
  const int chunk = std::max(1, opts.rays_per_chunk);
  const int n_chunks = (n_pix + chunk - 1) / chunk;
  parallel_for(
      n_chunks,
      [&](int c) {
        const int begin = c * chunk;
        const int end = std::min(n_pix, begin + chunk);
        std::vector<int> pixels(end - begin);
        std::vector<std::uint64_t> keys(end - begin);
        for (int i = begin; i < end; ++i) {
          pixels[i - begin] = i;
          keys[i - begin] = static_cast<std::uint64_t>(i);
        }
        const std::vector<Ray> rays = camera_rays(cam, pixels);
        const std::vector<RayColor> colors = render_rays(parts, state, radius, rays, keys, opts);
        for (int i = begin; i < end; ++i) {
          const RayColor& rc = colors[i - begin];
          for (int k = 0; k < 3; ++k) out.rgb.data[3 * i + k] = static_cast<float>(rc.rgb[k]);
          out.mask.data[i] = static_cast<float>(rc.mask);
          out.depth.data[i] = static_cast<float>(rc.depth);
        }
      },
      opts.workers);
  return out;
}

inline RenderOutput render_part(const RenderPart& part, int state, const Camera& cam,
                                double radius, const RenderOptions& opts) {
  return render_composite(std::span<const RenderPart>(&part, 1), state, cam, radius, opts);
}

/// Convenience overload for a learned field.
template <typename T>
RenderOutput render_part(const HexaPlane<T>& hp, const FieldHeads<T>& heads,
                         const ArticulationParams& params, int state, const Camera& cam,
                         double radius, const RenderOptions& opts) {
  const LearnedField<T> field(hp, heads, 0.5 * params.box_size, radius);
  return render_part(RenderPart{&field, params}, state, cam, radius, opts);
}

}  // namespace art
