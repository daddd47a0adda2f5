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
// Procedural articulated scenes built from rounded boxes: a static base plus
// drawers, doors or a lid, in a closed rest state, with a fixed camera rig and
// ground-truth renders per part and composite.
//
// Axis convention: +y up, the object front faces -z, +x points right.
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "art/geometry.hpp"
#include "art/image.hpp"
#include "art/kinematics.hpp"
#include "art/renderer.hpp"

namespace art {

struct RoundedBox {
  Vec3 center = Vec3::Zero();
  Vec3 half = Vec3::Constant(0.1);
  double corner = 0.01;

  double sdf(const Vec3& x) const {
    const Vec3 q = (x - center).cwiseAbs() - (half - Vec3::Constant(corner));
    return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0) - corner;
  }
};

/// Flat color, or a smooth two-tone stripe along one axis of the rest frame.
struct Albedo {
  Vec3 primary = Vec3::Constant(0.5);
  Vec3 secondary = Vec3::Constant(0.5);
  int stripe_axis = -1;  // -1: flat
  double frequency = 0.0;

  Vec3 at(const Vec3& x) const {
    if (stripe_axis < 0) return primary;
    const double m = 0.5 + 0.5 * std::sin(2.0 * kPi * frequency * x[stripe_axis]);
    return (1.0 - m) * primary + m * secondary;
  }
};

struct PrimitivePart {
  std::string name;
  RoundedBox shape;
  Albedo albedo;
  ArticulationParams articulation;
  double limit = 0.0;  // dynamics range is [0, limit] in the S convention
};

/// Analytic field of a primitive in its own part box.
class AnalyticField final : public FieldSource {
 public:
  explicit AnalyticField(const PrimitivePart& part) : part_(part) {}

  void evaluate(std::span<const Vec3> x_local, std::span<double> sdf,
                std::span<Vec3> rgb) const override {
    const Vec3 c = part_.articulation.box_center;
    const Vec3 h = 0.5 * part_.articulation.box_size;
    for (std::size_t i = 0; i < x_local.size(); ++i) {
      const Vec3 x = c + x_local[i].cwiseProduct(h);
      sdf[i] = part_.shape.sdf(x);
      rgb[i] = part_.albedo.at(x);
    }
  }

 private:
  const PrimitivePart& part_;
};

struct RigConfig {
  int views = 4;
  double distance = 2.0;
  double fov_deg = 34.0;
  int resolution = 32;
};

struct TruthRender {
  double inv_beta = 250.0;
  int n_samples = 96;
  int supersample = 2;  // rays per pixel side, box-filtered
};

struct SceneTruth {
  std::string template_name;
  std::uint64_t seed = 0;
  SceneFrame frame;
  std::vector<PrimitivePart> parts;
  std::vector<int> ordering;  // generation index of each canonical part
  std::vector<std::vector<Camera>> cameras;  // [view][state]
  TruthRender render;
  // [part][view][state] and [view][state]
  std::vector<std::vector<std::vector<Image>>> part_rgb, part_mask;
  std::vector<std::vector<Image>> composite_rgb, composite_mask;

  int views() const { return static_cast<int>(cameras.size()); }
  int resolution() const { return cameras.empty() ? 0 : cameras[0][0].width; }
  bool has_images() const { return !composite_rgb.empty(); }
  std::vector<ArticulationParams> articulation() const {
    std::vector<ArticulationParams> a;
    for (const auto& p : parts) a.push_back(p.articulation);
    return a;
  }
};

inline const std::vector<std::string>& template_names() {
  static const std::vector<std::string> names{"drawer-chest", "door-cabinet", "laptop", "mixed"};
  return names;
}

/// Movable parts sorted by rest box center: ascending y, then z, then x.
/// Part 0 stays first; ties keep their input order.
inline std::vector<int> canonical_order(const std::vector<PrimitivePart>& parts) {
  std::vector<int> order(parts.size());
  std::iota(order.begin(), order.end(), 0);
  if (parts.size() <= 1) return order;
  std::stable_sort(order.begin() + 1, order.end(), [&](int a, int b) {
    const Vec3& ca = parts[a].articulation.box_center;
    const Vec3& cb = parts[b].articulation.box_center;
    if (ca.y() != cb.y()) return ca.y() < cb.y();
    if (ca.z() != cb.z()) return ca.z() < cb.z();
    return ca.x() < cb.x();
  });
  return order;
}

/// Training views: four azimuths across the front hemisphere at 30 degrees
/// elevation (more views interleave further azimuths). Evaluation views use
/// disjoint azimuths and elevations.
inline std::vector<Camera> rig_cameras(const RigConfig& rig) {
  std::vector<Camera> cams;
  const double fov = rig.fov_deg * kPi / 180.0;
  for (int v = 0; v < rig.views; ++v) {
    const double f = rig.views == 1 ? 0.5 : static_cast<double>(v) / (rig.views - 1);
    const double az = (-54.0 + 108.0 * f) * kPi / 180.0;
    cams.push_back(orbit_camera(az, 30.0 * kPi / 180.0, rig.distance, fov, rig.resolution,
                                rig.resolution));
  }
  return cams;
}

inline std::vector<Camera> eval_cameras(const RigConfig& rig, int count = 8) {
  static const double az[8] = {-72, -36, 0, 36, 72, -27, 9, 45};
  static const double el[8] = {18, 18, 18, 18, 18, 42, 42, 42};
  std::vector<Camera> cams;
  const double fov = rig.fov_deg * kPi / 180.0;
  for (int i = 0; i < count; ++i)
    cams.push_back(orbit_camera(az[i % 8] * kPi / 180.0, el[i % 8] * kPi / 180.0, rig.distance,
                                fov, rig.resolution, rig.resolution));
  return cams;
}

namespace detail {

inline Vec3 random_color(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.15, 0.9);
  return Vec3(u(rng), u(rng), u(rng));
}

inline Albedo random_albedo(std::mt19937_64& rng, const Vec3* avoid) {
  Albedo a;
  for (int tries = 0; tries < 64; ++tries) {
    a.primary = random_color(rng);
    if (!avoid || (a.primary - *avoid).lpNorm<1>() >= 0.45) break;
  }
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) < 0.5) {
    a.secondary = (0.55 * a.primary).cwiseMax(0.05);
    a.stripe_axis = static_cast<int>(u(rng) * 3.0) % 3;
    a.frequency = 1.5 + 1.5 * u(rng);
  } else {
    a.secondary = a.primary;
  }
  return a;
}

inline PrimitivePart make_part(std::string name, const Vec3& center, const Vec3& half,
                               double corner, MotionType motion, const Vec3& axis,
                               const Vec3& pivot, double limit, const Albedo& albedo) {
  PrimitivePart p;
  p.name = std::move(name);
  p.shape = RoundedBox{center, half, corner};
  p.albedo = albedo;
  p.articulation.box_center = center;
  p.articulation.box_size = 2.0 * half + Vec3::Constant(0.02);
  p.articulation.motion = motion;
  p.articulation.axis_dir = axis.normalized();
  p.articulation.axis_point = pivot;
  p.limit = limit;
  return p;
}

/// Largest distance from the origin reached by any part box corner over the
/// dynamics range [0, limit].
inline double swept_extent(const std::vector<PrimitivePart>& parts, double radius, int steps = 16) {
  double r = 0.0;
  for (const auto& p : parts) {
    ArticulationParams a = p.articulation;
    for (int k = 0; k <= steps; ++k) {
      a.dynamics = {p.limit * k / steps};
      const AABB box = part_box(a);
      for (int c = 0; c < 8; ++c) {
        const Vec3 corner(c & 1 ? box.hi().x() : box.lo().x(), c & 2 ? box.hi().y() : box.lo().y(),
                          c & 4 ? box.hi().z() : box.lo().z());
        r = std::max(r, pose_point(corner, a, 0, radius).norm());
      }
      if (a.motion == MotionType::Static) break;
    }
  }
  return r;
}

inline void scale_parts(std::vector<PrimitivePart>& parts, double s) {
  for (auto& p : parts) {
    p.shape.center *= s;
    p.shape.half *= s;
    p.shape.corner *= s;
    p.articulation.box_center *= s;
    p.articulation.box_size *= s;
    p.articulation.axis_point *= s;
    if (p.articulation.motion == MotionType::Prismatic) p.limit *= s;  // translation scales
  }
}

struct Cabinet {
  Vec3 half;
  double margin;
};

inline Cabinet random_cabinet(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> w(0.32, 0.48), h(0.3, 0.46), d(0.26, 0.36);
  return Cabinet{Vec3(0.5 * w(rng), 0.5 * h(rng), 0.5 * d(rng)), 0.025};
}

inline PrimitivePart drawer(const Cabinet& cab, double y_lo, double y_hi, double radius,
                            const Albedo& albedo) {
  const double front = -cab.half.z() - 0.015;
  const double depth = 1.5 * cab.half.z();
  const Vec3 half(cab.half.x() - cab.margin, 0.5 * (y_hi - y_lo), 0.5 * depth);
  const Vec3 center(0.0, 0.5 * (y_lo + y_hi), front + 0.5 * depth);
  // Pull-out up to 60% of the drawer depth; S counts translation in units of 2r.
  return make_part("drawer", center, half, 0.008, MotionType::Prismatic, Vec3(0, 0, -1), center,
                   0.6 * depth / (2.0 * radius), albedo);
}

inline PrimitivePart door(const Cabinet& cab, double x_lo, double x_hi, double y_lo, double y_hi,
                          bool hinge_left, const Albedo& albedo) {
  const double thick = 0.022;
  const double zf = -cab.half.z();
  const Vec3 half(0.5 * (x_hi - x_lo), 0.5 * (y_hi - y_lo), 0.5 * thick);
  const Vec3 center(0.5 * (x_lo + x_hi), 0.5 * (y_lo + y_hi), zf - 0.5 * thick);
  const Vec3 pivot(hinge_left ? x_lo : x_hi, center.y(), zf - thick);
  const Vec3 axis = hinge_left ? Vec3(0, 1, 0) : Vec3(0, -1, 0);
  return make_part("door", center, half, 0.006, MotionType::Revolute, axis, pivot, 0.25, albedo);
}

}  // namespace detail

/// Deterministic scene for (template, seed). `slot_budget` caps the number of
/// parts including the base.
inline SceneTruth sample_scene(const std::string& tmpl, std::uint64_t seed, int slot_budget = 3,
                               double radius = 0.5, int state_count = 2,
                               const RigConfig& rig = {}) {
  using namespace detail;
  if (std::find(template_names().begin(), template_names().end(), tmpl) == template_names().end())
    throw ConfigError("unknown template '" + tmpl + "'");
  require(slot_budget >= 2, "sample_scene: slot budget must allow one movable part");
  require(state_count >= 2, "sample_scene: need at least two states");
  std::mt19937_64 rng(mix_seed(seed, 0x5ce9e));
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const int max_movable = slot_budget - 1;

  std::vector<PrimitivePart> parts;
  const Albedo base_albedo = random_albedo(rng, nullptr);
  const Albedo part_albedo = random_albedo(rng, &base_albedo.primary);
  if (tmpl == "laptop") {
    std::uniform_real_distribution<double> w(0.44, 0.56), d(0.3, 0.38);
    const double hw = 0.5 * w(rng), hd = 0.5 * d(rng);
    const double base_t = 0.016, lid_t = 0.011;
    const double y0 = -0.08;
    parts.push_back(make_part("base", Vec3(0, y0, 0), Vec3(hw, base_t, hd), 0.006,
                              MotionType::Static, Vec3::UnitY(), Vec3(0, y0, 0), 0.0, base_albedo));
    const double y_lid = y0 + base_t + lid_t + 0.002;
    const Vec3 pivot(0.0, y_lid, hd);
    parts.push_back(make_part("lid", Vec3(0, y_lid, 0), Vec3(hw, lid_t, hd), 0.005,
                              MotionType::Revolute, Vec3::UnitX(), pivot, 1.0 / 3.0, part_albedo));
  } else {
    const Cabinet cab = random_cabinet(rng);
    parts.push_back(make_part("base", Vec3::Zero(), cab.half, 0.012, MotionType::Static,
                              Vec3::UnitY(), Vec3::Zero(), 0.0, base_albedo));
    const double m = cab.margin, gap = 0.02;
    const double x_lo = -cab.half.x() + m, x_hi = cab.half.x() - m;
    const double y_lo = -cab.half.y() + m, y_hi = cab.half.y() - m;
    if (tmpl == "drawer-chest") {
      const int n = std::min(max_movable, 1 + static_cast<int>(u01(rng) * 2.0));
      const double hd = (y_hi - y_lo - (n - 1) * gap) / n;
      for (int i = 0; i < n; ++i) {
        const double a = y_lo + i * (hd + gap);
        parts.push_back(drawer(cab, a, a + hd, radius, part_albedo));
      }
    } else if (tmpl == "door-cabinet") {
      const int n = std::min(max_movable, 1 + static_cast<int>(u01(rng) * 2.0));
      if (n == 1) {
        parts.push_back(door(cab, x_lo, x_hi, y_lo, y_hi, u01(rng) < 0.5, part_albedo));
      } else {
        const double xm = 0.5 * (x_lo + x_hi);
        parts.push_back(door(cab, x_lo, xm - 0.5 * gap, y_lo, y_hi, true, part_albedo));
        parts.push_back(door(cab, xm + 0.5 * gap, x_hi, y_lo, y_hi, false, part_albedo));
      }
    } else {  // mixed: drawer over a door
      const double split = y_lo + (0.55 + 0.1 * u01(rng)) * (y_hi - y_lo);
      parts.push_back(drawer(cab, split + 0.5 * gap, y_hi, radius, part_albedo));
      if (max_movable >= 2)
        parts.push_back(door(cab, x_lo, x_hi, y_lo, split - 0.5 * gap, u01(rng) < 0.5, part_albedo));
    }
  }

  // Uniform rescale so every swept part box stays inside the bounding sphere.
  const double extent = swept_extent(parts, radius);
  scale_parts(parts, std::min(1.0, 0.94 * radius / extent));

  // Dynamics: state 0 near closed, the last state near the limit, any others between.
  for (auto& p : parts) {
    p.articulation.dynamics.assign(state_count, 0.0);
    if (p.articulation.motion == MotionType::Static) continue;
    const double lim_s = p.limit;
    for (int t = 0; t < state_count; ++t) {
      const double lo = t == 0 ? 0.0 : (t == state_count - 1 ? 0.6 : 0.3);
      const double hi = t == 0 ? 0.3 : (t == state_count - 1 ? 1.0 : 0.6);
      p.articulation.dynamics[t] = lim_s * (lo + (hi - lo) * u01(rng));
    }
  }

  SceneTruth s;
  s.template_name = tmpl;
  s.seed = seed;
  s.frame = SceneFrame{radius, state_count, static_cast<int>(parts.size())};
  s.ordering = canonical_order(parts);
  for (int idx : s.ordering) s.parts.push_back(parts[idx]);
  const std::vector<Camera> cams = rig_cameras(rig);
  for (const Camera& c : cams) s.cameras.emplace_back(state_count, c);
  return s;
}

/// Checks the box, dynamics and swept-volume invariants of a generated scene.
inline bool scene_valid(const SceneTruth& s) {
  const double r = s.frame.radius;
  for (std::size_t i = 0; i < s.parts.size(); ++i) {
    const auto& a = s.parts[i].articulation;
    if ((i == 0) != (a.motion == MotionType::Static)) return false;
    if ((a.box_center.array().abs() >= r).any() || (a.axis_point.array().abs() >= r).any())
      return false;
    if ((a.box_size.array() <= 0.0).any() || (a.box_size.array() >= 2.0 * r).any()) return false;
    if (std::abs(a.axis_dir.norm() - 1.0) > 1e-6) return false;
    for (double d : a.dynamics)
      if (!(d > -1.0 && d < 1.0)) return false;
  }
  return detail::swept_extent(s.parts, r, 32) < r;
}

inline RenderOptions truth_options(const TruthRender& tr) {
  RenderOptions o;
  o.inv_beta = tr.inv_beta;
  o.n_samples = tr.n_samples;
  return o;
}

/// Ground-truth composite for any camera and state.
inline RenderOutput render_truth_view(const SceneTruth& s, const Camera& cam, int state) {
  std::vector<AnalyticField> fields;
  fields.reserve(s.parts.size());
  for (const auto& p : s.parts) fields.emplace_back(p);
  std::vector<RenderPart> rp;
  for (std::size_t i = 0; i < s.parts.size(); ++i) rp.push_back({&fields[i], s.parts[i].articulation});
  const int ss = s.render.supersample;
  RenderOutput o = render_composite(rp, state, cam.resized(cam.width * ss, cam.height * ss), s.frame.radius,
                                    truth_options(s.render));
  if (ss > 1) {
    o.rgb = downsample(o.rgb, ss);
    o.mask = downsample(o.mask, ss);
  }
  return o;
}

/// Fills the per-part (rendered in isolation) and composite images.
inline void render_truth(SceneTruth& s) {
  const int P = static_cast<int>(s.parts.size());
  const int V = s.views(), T = s.frame.state_count;
  const RenderOptions opts = truth_options(s.render);
  const int ss = s.render.supersample;
  auto filtered = [ss](RenderOutput o) {
    if (ss > 1) {
      o.rgb = downsample(o.rgb, ss);
      o.mask = downsample(o.mask, ss);
    }
    return o;
  };
  std::vector<AnalyticField> fields;
  fields.reserve(P);
  for (const auto& p : s.parts) fields.emplace_back(p);
  std::vector<RenderPart> rp;
  for (int i = 0; i < P; ++i) rp.push_back({&fields[i], s.parts[i].articulation});
  s.part_rgb.assign(P, std::vector<std::vector<Image>>(V, std::vector<Image>(T)));
  s.part_mask = s.part_rgb;
  s.composite_rgb.assign(V, std::vector<Image>(T));
  s.composite_mask = s.composite_rgb;
  for (int v = 0; v < V; ++v)
    for (int t = 0; t < T; ++t) {
      const Camera cam = s.cameras[v][t].resized(s.cameras[v][t].width * ss, s.cameras[v][t].height * ss);
      for (int p = 0; p < P; ++p) {
        RenderOutput o = filtered(render_part(rp[p], t, cam, s.frame.radius, opts));
        s.part_rgb[p][v][t] = std::move(o.rgb);
        s.part_mask[p][v][t] = std::move(o.mask);
      }
      RenderOutput o = filtered(render_composite(rp, t, cam, s.frame.radius, opts));
      s.composite_rgb[v][t] = std::move(o.rgb);
      s.composite_mask[v][t] = std::move(o.mask);
    }
}

// ---------------------------------------------------------------------------
// Dataset directory format

inline nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v.x(), v.y(), v.z()}); }

inline Vec3 json_vec(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw DataError("manifest: expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline nlohmann::json camera_json(const Camera& c) {
  nlohmann::json rot = nlohmann::json::array();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) rot.push_back(c.rotation(i, k));
  return {{"fx", c.fx},         {"fy", c.fy},     {"cx", c.cx},
          {"cy", c.cy},         {"width", c.width}, {"height", c.height},
          {"world_from_camera_rotation", rot}, {"center", vec_json(c.center)}};
}

inline Camera json_camera(const nlohmann::json& j) {
  Camera c;
  c.fx = j.at("fx").get<double>();
  c.fy = j.at("fy").get<double>();
  c.cx = j.at("cx").get<double>();
  c.cy = j.at("cy").get<double>();
  c.width = j.at("width").get<int>();
  c.height = j.at("height").get<int>();
  const auto& rot = j.at("world_from_camera_rotation");
  if (!rot.is_array() || rot.size() != 9) throw DataError("manifest: camera rotation needs 9 values");
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) c.rotation(i, k) = rot[3 * i + k].get<double>();
  c.center = json_vec(j.at("center"));
  c.validate();
  return c;
}

inline nlohmann::json articulation_json(const ArticulationParams& a) {
  return {{"box_center", vec_json(a.box_center)}, {"box_size", vec_json(a.box_size)},
          {"motion", std::string(to_string(a.motion))},        {"axis_dir", vec_json(a.axis_dir)},
          {"axis_point", vec_json(a.axis_point)}, {"dynamics", a.dynamics}};
}

inline ArticulationParams json_articulation(const nlohmann::json& j) {
  ArticulationParams a;
  a.box_center = json_vec(j.at("box_center"));
  a.box_size = json_vec(j.at("box_size"));
  a.motion = motion_from_string(j.at("motion").get<std::string>());
  a.axis_dir = json_vec(j.at("axis_dir"));
  a.axis_point = json_vec(j.at("axis_point"));
  a.dynamics = j.at("dynamics").get<std::vector<double>>();
  return a;
}

inline nlohmann::json manifest_json(const SceneTruth& s) {
  nlohmann::json parts = nlohmann::json::array();
  for (std::size_t i = 0; i < s.parts.size(); ++i) {
    const auto& p = s.parts[i];
    parts.push_back({{"index", i},
                     {"name", p.name},
                     {"shape", {{"kind", "rounded_box"},
                                {"center", vec_json(p.shape.center)},
                                {"half_extent", vec_json(p.shape.half)},
                                {"corner_radius", p.shape.corner}}},
                     {"albedo", {{"primary", vec_json(p.albedo.primary)},
                                 {"secondary", vec_json(p.albedo.secondary)},
                                 {"stripe_axis", p.albedo.stripe_axis},
                                 {"frequency", p.albedo.frequency}}},
                     {"articulation", articulation_json(p.articulation)},
                     {"limit", p.limit}});
  }
  nlohmann::json cams = nlohmann::json::array();
  for (int v = 0; v < s.views(); ++v)
    for (int t = 0; t < s.frame.state_count; ++t) {
      nlohmann::json c = camera_json(s.cameras[v][t]);
      c["view"] = v;
      c["state"] = t;
      cams.push_back(c);
    }
  nlohmann::json motion = nlohmann::json::array();
  for (int t = 0; t < s.frame.state_count; ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (const auto& p : s.parts) row.push_back(p.articulation.dynamics[t]);
    motion.push_back(row);
  }
  nlohmann::json physical = nlohmann::json::array();
  for (int t = 0; t < s.frame.state_count; ++t) {
    nlohmann::json row = nlohmann::json::array();
    for (const auto& p : s.parts)
      row.push_back(physical_motion(p.articulation.motion, p.articulation.dynamics[t], s.frame.radius));
    physical.push_back(row);
  }
  return {{"format", "artrecon-scene"},
          {"version", 1},
          {"template", s.template_name},
          {"seed", s.seed},
          {"frame", {{"radius", s.frame.radius},
                     {"state_count", s.frame.state_count},
                     {"part_count", s.frame.part_count}}},
          {"axis_convention", {{"up", "+y"}, {"front_to_back", "-z to +z"},
                               {"left_to_right", "-x to +x"},
                               {"camera", "right-handed, x right, y up, looks down -z"},
                               {"pixel", "rays through pixel centers, rows grow downwards"}}},
          {"views", s.views()},
          {"resolution", s.resolution()},
          {"truth_render", {{"inv_beta", s.render.inv_beta}, {"n_samples", s.render.n_samples},
                            {"supersample", s.render.supersample}}},
          {"cameras", cams},
          {"parts", parts},
          {"motion_values", motion},
          {"motion_physical", physical},
          {"ordering", s.ordering}};
}

inline std::string part_image_name(int part, int view, int state, const char* ext) {
  return "part" + std::to_string(part) + "_v" + std::to_string(view) + "_s" +
         std::to_string(state) + ext;
}

inline std::string composite_image_name(int view, int state, const char* ext) {
  return "composite_v" + std::to_string(view) + "_s" + std::to_string(state) + ext;
}

inline void write_scene(const SceneTruth& s, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "manifest.json");
    if (!f) throw DataError("cannot write " + (dir / "manifest.json").string());
    f << manifest_json(s).dump(2) << "\n";
  }
  if (!s.has_images()) return;
  for (std::size_t p = 0; p < s.parts.size(); ++p)
    for (int v = 0; v < s.views(); ++v)
      for (int t = 0; t < s.frame.state_count; ++t) {
        write_pnm(dir / part_image_name(static_cast<int>(p), v, t, ".ppm"), s.part_rgb[p][v][t]);
        write_pnm(dir / part_image_name(static_cast<int>(p), v, t, ".pgm"), s.part_mask[p][v][t]);
      }
  for (int v = 0; v < s.views(); ++v)
    for (int t = 0; t < s.frame.state_count; ++t) {
      write_pnm(dir / composite_image_name(v, t, ".ppm"), s.composite_rgb[v][t]);
      write_pnm(dir / composite_image_name(v, t, ".pgm"), s.composite_mask[v][t]);
    }
}

inline SceneTruth parse_manifest(const nlohmann::json& j) {
  SceneTruth s;
  try {
    if (j.at("format").get<std::string>() != "artrecon-scene") throw DataError("manifest: wrong format tag");
    s.template_name = j.at("template").get<std::string>();
    s.seed = j.at("seed").get<std::uint64_t>();
    const auto& fr = j.at("frame");
    s.frame = SceneFrame{fr.at("radius").get<double>(), fr.at("state_count").get<int>(),
                         fr.at("part_count").get<int>()};
    s.render.inv_beta = j.at("truth_render").at("inv_beta").get<double>();
    s.render.n_samples = j.at("truth_render").at("n_samples").get<int>();
    s.render.supersample = j.at("truth_render").at("supersample").get<int>();
    const int V = j.at("views").get<int>(), T = s.frame.state_count;
    if (V < 1 || T < 2) throw DataError("manifest: bad view or state count");
    s.cameras.assign(V, std::vector<Camera>(T));
    std::vector<int> seen(static_cast<std::size_t>(V) * T, 0);
    for (const auto& c : j.at("cameras")) {
      const int v = c.at("view").get<int>(), t = c.at("state").get<int>();
      if (v < 0 || v >= V || t < 0 || t >= T) throw DataError("manifest: camera index out of range");
      s.cameras[v][t] = json_camera(c);
      seen[v * T + t] = 1;
    }
    if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw DataError("manifest: missing cameras");
    for (const auto& pj : j.at("parts")) {
      PrimitivePart p;
      p.name = pj.at("name").get<std::string>();
      p.shape.center = json_vec(pj.at("shape").at("center"));
      p.shape.half = json_vec(pj.at("shape").at("half_extent"));
      p.shape.corner = pj.at("shape").at("corner_radius").get<double>();
      p.albedo.primary = json_vec(pj.at("albedo").at("primary"));
      p.albedo.secondary = json_vec(pj.at("albedo").at("secondary"));
      p.albedo.stripe_axis = pj.at("albedo").at("stripe_axis").get<int>();
      p.albedo.frequency = pj.at("albedo").at("frequency").get<double>();
      p.articulation = json_articulation(pj.at("articulation"));
      p.limit = pj.at("limit").get<double>();
      if (static_cast<int>(p.articulation.dynamics.size()) != T)
        throw DataError("manifest: dynamics length differs from state count");
      s.parts.push_back(std::move(p));
    }
    if (static_cast<int>(s.parts.size()) != s.frame.part_count)
      throw DataError("manifest: part count mismatch");
    s.ordering = j.at("ordering").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
  return s;
}

inline SceneTruth read_scene(const std::filesystem::path& dir, bool with_images = true) {
  std::ifstream f(dir / "manifest.json");
  if (!f) throw DataError("missing " + (dir / "manifest.json").string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest: " + std::string(e.what()));
  }
  SceneTruth s = parse_manifest(j);
  if (!with_images) return s;
  const int P = s.frame.part_count, V = s.views(), T = s.frame.state_count;
  s.part_rgb.assign(P, std::vector<std::vector<Image>>(V, std::vector<Image>(T)));
  s.part_mask = s.part_rgb;
  s.composite_rgb.assign(V, std::vector<Image>(T));
  s.composite_mask = s.composite_rgb;
  auto load = [&](const std::string& name, int channels, const Camera& cam) {
    Image img = read_pnm(dir / name);
    if (img.channels != channels || img.width != cam.width || img.height != cam.height)
      throw DataError(name + ": unexpected image shape");
    return img;
  };
  for (int v = 0; v < V; ++v)
    for (int t = 0; t < T; ++t) {
      const Camera& cam = s.cameras[v][t];
      for (int p = 0; p < P; ++p) {
        s.part_rgb[p][v][t] = load(part_image_name(p, v, t, ".ppm"), 3, cam);
        s.part_mask[p][v][t] = load(part_image_name(p, v, t, ".pgm"), 1, cam);
      }
      s.composite_rgb[v][t] = load(composite_image_name(v, t, ".ppm"), 3, cam);
      s.composite_mask[v][t] = load(composite_image_name(v, t, ".pgm"), 1, cam);
    }
  return s;
}

/// Scene folders of a dataset directory, sorted by name.
inline std::vector<std::filesystem::path> list_scenes(const std::filesystem::path& root) {
  if (!std::filesystem::is_directory(root)) throw DataError("dataset directory not found: " + root.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(root))
    if (e.is_directory() && std::filesystem::exists(e.path() / "manifest.json")) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw DataError("no scenes in " + root.string());
  return out;
}

}  // namespace art
