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
// Pinhole cameras, rays, Plucker embeddings and ray/box sampling.
//
// Camera convention (shared by data generation, tokenization and rendering):
// right-handed camera frame, x right, y up, looking down -z. Image rows grow
// downwards, pixel (col, row) is traced through its center (col+0.5, row+0.5).
#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "art/common.hpp"

namespace art {

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 dir = -Vec3::UnitZ();

  Vec3 at(double t) const { return origin + t * dir; }
};

struct Camera {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  int width = 1, height = 1;
  Mat3 rotation = Mat3::Identity();  // world_from_camera
  Vec3 center = Vec3::Zero();        // camera origin in world

  void validate() const {
    if (!(fx > 0.0 && fy > 0.0)) throw ContractError("camera focal lengths must be positive");
    if (width <= 0 || height <= 0) throw ContractError("camera size must be positive");
    const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (ortho > 1e-6) throw ContractError("camera rotation is not orthonormal");
  }

  Vec3 forward() const { return -rotation.col(2); }

  /// Same pose and field of view at a different pixel resolution.
  Camera resized(int new_width, int new_height) const {
    Camera c = *this;
    const double sx = static_cast<double>(new_width) / width;
    const double sy = static_cast<double>(new_height) / height;
    c.fx *= sx;
    c.fy *= sy;
    c.cx *= sx;
    c.cy *= sy;
    c.width = new_width;
    c.height = new_height;
    return c;
  }

  /// Projects a world point to continuous pixel coordinates (col, row).
  /// Returns nothing for points behind the camera.
  std::optional<std::pair<double, double>> project(const Vec3& world) const {
    const Vec3 p = rotation.transpose() * (world - center);
    if (p.z() >= -1e-12) return std::nullopt;
    const double u = cx + fx * (p.x() / -p.z());
    const double v = cy - fy * (p.y() / -p.z());
    return std::make_pair(u, v);
  }
};

/// Camera at `eye` looking at `target` with vertical field of view `fov_y`
/// (radians), principal point at the image center.
inline Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fov_y,
                      int width, int height) {
  Camera cam;
  const Vec3 z = (eye - target).normalized();
  Vec3 x = up.cross(z);
  if (x.norm() < 1e-9) x = Vec3::UnitX().cross(z);
  x.normalize();
  const Vec3 y = z.cross(x);
  cam.rotation.col(0) = x;
  cam.rotation.col(1) = y;
  cam.rotation.col(2) = z;
  cam.center = eye;
  cam.width = width;
  cam.height = height;
  cam.fy = 0.5 * height / std::tan(0.5 * fov_y);
  cam.fx = cam.fy;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  return cam;
}

inline Ray pixel_ray(const Camera& cam, int col, int row) {
  if (col < 0 || row < 0 || col >= cam.width || row >= cam.height)
    throw ContractError("pixel_ray: pixel outside the image");
  const Vec3 d_cam((col + 0.5 - cam.cx) / cam.fx, -(row + 0.5 - cam.cy) / cam.fy, -1.0);
  return Ray{cam.center, (cam.rotation * d_cam).normalized()};
}

/// Plucker line coordinates (v, v x o).
inline std::array<double, 6> plucker(const Ray& ray) {
  const Vec3 m = ray.dir.cross(ray.origin);
  return {ray.dir.x(), ray.dir.y(), ray.dir.z(), m.x(), m.y(), m.z()};
}

struct AABB {
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();

  Vec3 lo() const { return center - 0.5 * size; }
  Vec3 hi() const { return center + 0.5 * size; }
  double volume() const { return size.prod(); }
  bool valid() const { return (size.array() > 0.0).all() && center.allFinite(); }
};

/// Slab intersection. Returns (t_near, t_far) with 0 <= t_near < t_far when the
/// ray reaches the box ahead of its origin.
inline std::optional<std::pair<double, double>> ray_aabb(const Ray& ray, const AABB& box) {
  const Vec3 lo = box.lo();
  const Vec3 hi = box.hi();
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a];
    const double d = ray.dir[a];
    if (std::abs(d) < 1e-15) {
      if (o < lo[a] || o > hi[a]) return std::nullopt;
      continue;
    }
    double ta = (lo[a] - o) / d;
    double tb = (hi[a] - o) / d;
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (!(t0 < t1)) return std::nullopt;
  }
  return std::make_pair(t0, t1);
}

/// n sample parameters in [t_near, t_far]: bin midpoints, or one uniform draw
/// per bin when jittered. Draws come from a counter-based stream so a
/// (seed, n) pair always reproduces the same values.
inline void stratified_samples(double t_near, double t_far, int n, bool jitter,
                               std::uint64_t seed, std::vector<double>& out) {
  require(t_near < t_far, "stratified_samples: empty interval");
  require(n >= 1, "stratified_samples: need at least one sample");
  out.resize(n);
  const double width = (t_far - t_near) / n;
  for (int i = 0; i < n; ++i) {
    const double u = jitter ? unit_from_bits(mix_seed(seed, static_cast<std::uint64_t>(i))) : 0.5;
    out[i] = t_near + (i + u) * width;
  }
  for (int i = 1; i < n; ++i) {
    // Guard strict ordering against collapsed bins from rounding.
    if (!(out[i] > out[i - 1])) out[i] = std::nextafter(out[i - 1], t_far);
  }
}

inline std::vector<double> stratified_samples(double t_near, double t_far, int n, bool jitter,
                                              std::uint64_t seed) {
  std::vector<double> out;
  stratified_samples(t_near, t_far, n, jitter, seed, out);
  return out;
}

/// Camera on a sphere of radius `distance` around the origin. Azimuth is
/// measured from the front (-z) towards +x, elevation upwards from the xz plane.
inline Camera orbit_camera(double azimuth, double elevation, double distance, double fov_y,
                           int width, int height) {
  const Vec3 eye(distance * std::sin(azimuth) * std::cos(elevation),
                 distance * std::sin(elevation),
                 -distance * std::cos(azimuth) * std::cos(elevation));
  return look_at(eye, Vec3::Zero(), Vec3::UnitY(), fov_y, width, height);
}

}  // namespace art
