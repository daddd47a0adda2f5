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
// Articulation data model in the canonical rest frame. Every part carries one
// joint to the base; the base (slot 0) never moves.
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "art/common.hpp"

namespace art {

enum class MotionType { Static, Prismatic, Revolute };

inline std::string_view to_string(MotionType m) {
  switch (m) {
    case MotionType::Static: return "static";
    case MotionType::Prismatic: return "prismatic";
    case MotionType::Revolute: return "revolute";
  }
  return "static";
}

inline MotionType motion_from_string(std::string_view s) {
  if (s == "static") return MotionType::Static;
  if (s == "prismatic") return MotionType::Prismatic;
  if (s == "revolute") return MotionType::Revolute;
  throw DataError("unknown motion type '" + std::string(s) + "'");
}

struct SceneFrame {
  double radius = 0.5;
  int state_count = 2;
  int part_count = 2;

  void validate(int slot_budget) const {
    if (!(radius > 0.0)) throw ConfigError("scene radius must be positive");
    if (state_count < 2) throw ConfigError("at least two states are required");
    if (part_count < 1 || part_count > slot_budget)
      throw ConfigError("part count " + std::to_string(part_count) +
                        " outside [1, " + std::to_string(slot_budget) + "]");
  }
};

struct ArticulationParams {
  Vec3 box_center = Vec3::Zero();
  Vec3 box_size = Vec3::Ones();
  MotionType motion = MotionType::Static;
  Vec3 axis_dir = Vec3::UnitZ();
  Vec3 axis_point = Vec3::Zero();
  std::vector<double> dynamics;

  int state_count() const { return static_cast<int>(dynamics.size()); }
};

/// Width of the raw articulation vector for `state_count` states:
/// center 3, size 3, type logits 2, axis 3, pivot 3, dynamics T.
constexpr int articulation_width(int state_count) { return 14 + state_count; }

namespace raw_layout {
inline constexpr int kCenter = 0;
inline constexpr int kSize = 3;
inline constexpr int kLogits = 6;
inline constexpr int kAxis = 8;
inline constexpr int kPivot = 11;
inline constexpr int kDynamics = 14;
}  // namespace raw_layout

inline constexpr double kMinAxisNorm = 1e-8;

// Sigmoid kept strictly inside (0, 1) so saturated logits still land in the
// open parameter ranges.
inline double open_sigmoid(double x) {
  constexpr double eps = 2.220446049250313e-16;
  return std::clamp(sigmoid(x), eps, 1.0 - eps);
}

/// Maps a raw network articulation vector to bounded parameters.
/// Slot 0 is the base and is forced static; other slots pick prismatic or
/// revolute by argmax of the two logits, ties going to prismatic.
inline ArticulationParams remap_articulation(std::span<const double> raw, int state_count,
                                             double radius, int slot) {
  require(state_count >= 1, "remap_articulation: state count must be positive");
  if (static_cast<int>(raw.size()) != articulation_width(state_count))
    throw ContractError("remap_articulation: expected " +
                        std::to_string(articulation_width(state_count)) + " entries, got " +
                        std::to_string(raw.size()));
  require(radius > 0.0, "remap_articulation: radius must be positive");
  using namespace raw_layout;
  ArticulationParams p;
  for (int i = 0; i < 3; ++i) {
    p.box_center[i] = 2.0 * radius * open_sigmoid(raw[kCenter + i]) - radius;
    p.box_size[i] = 2.0 * radius * open_sigmoid(raw[kSize + i]);
    p.axis_point[i] = 2.0 * radius * open_sigmoid(raw[kPivot + i]) - radius;
  }
  const Vec3 axis(raw[kAxis], raw[kAxis + 1], raw[kAxis + 2]);
  const double n = axis.norm();
  if (!(n >= kMinAxisNorm)) throw DegenerateAxisError("remap_articulation: axis norm below 1e-8");
  p.axis_dir = axis / n;
  if (slot == 0) {
    p.motion = MotionType::Static;
  } else {
    p.motion = raw[kLogits + 1] > raw[kLogits] ? MotionType::Revolute : MotionType::Prismatic;
  }
  p.dynamics.resize(state_count);
  for (int t = 0; t < state_count; ++t) p.dynamics[t] = 2.0 * open_sigmoid(raw[kDynamics + t]) - 1.0;
  return p;
}

/// Raw vector that remaps to `params` (up to floating point); the chosen
/// motion logit leads the other by `logit_gap`.
inline std::vector<double> encode_articulation(const ArticulationParams& params, double radius,
                                               double logit_gap = 4.0) {
  using namespace raw_layout;
  auto logit = [](double p) { return std::log(p / (1.0 - p)); };
  const int t_count = params.state_count();
  std::vector<double> raw(articulation_width(t_count), 0.0);
  for (int i = 0; i < 3; ++i) {
    raw[kCenter + i] = logit((params.box_center[i] + radius) / (2.0 * radius));
    raw[kSize + i] = logit(params.box_size[i] / (2.0 * radius));
    raw[kPivot + i] = logit((params.axis_point[i] + radius) / (2.0 * radius));
    raw[kAxis + i] = params.axis_dir[i];
  }
  if (params.motion == MotionType::Prismatic) raw[kLogits] = logit_gap;
  if (params.motion == MotionType::Revolute) raw[kLogits + 1] = logit_gap;
  for (int t = 0; t < t_count; ++t) raw[kDynamics + t] = logit(0.5 * (params.dynamics[t] + 1.0));
  return raw;
}

/// Physical motion for a dynamics value: radians for revolute, object units
/// for prismatic, zero for static parts.
inline double physical_motion(MotionType m, double s, double radius) {
  switch (m) {
    case MotionType::Static: return 0.0;
    case MotionType::Prismatic: return 2.0 * radius * s;
    case MotionType::Revolute: return 2.0 * kPi * s;
  }
  return 0.0;
}

inline double dynamics_from_physical(MotionType m, double value, double radius) {
  switch (m) {
    case MotionType::Static: return 0.0;
    case MotionType::Prismatic: return value / (2.0 * radius);
    case MotionType::Revolute: return value / (2.0 * kPi);
  }
  return 0.0;
}

/// Rotation matrix for angle `theta` about unit `axis` (Rodrigues). Below 1e-8
/// rad the first-order expansion I + theta [axis]x is used.
inline Mat3 axis_angle(const Vec3& axis, double theta) {
  Mat3 k;
  k << 0.0, -axis.z(), axis.y(), axis.z(), 0.0, -axis.x(), -axis.y(), axis.x(), 0.0;
  if (std::abs(theta) < 1e-8) return Mat3::Identity() + theta * k;
  return Mat3::Identity() + std::sin(theta) * k + (1.0 - std::cos(theta)) * (k * k);
}

/// Rigid transform of a rest-frame point to its pose at `state`.
struct RigidPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return rotation * x + translation; }
  RigidPose inverse() const {
    RigidPose inv;
    inv.rotation = rotation.transpose();
    inv.translation = -(inv.rotation * translation);
    return inv;
  }
};

inline double state_value(const ArticulationParams& params, int state) {
  require(state >= 0 && state < params.state_count(), "state index out of range");
  return params.dynamics[state];
}

/// Pose at an explicit dynamics value S (angle 2*pi*S, translation 2r*S).
inline RigidPose pose_for_value(const ArticulationParams& params, double s, double radius) {
  RigidPose pose;
  if (s == 0.0) return pose;
  switch (params.motion) {
    case MotionType::Static:
      break;
    case MotionType::Prismatic:
      // The pivot is not needed for translation.
      pose.translation = 2.0 * radius * s * params.axis_dir;
      break;
    case MotionType::Revolute:
      pose.rotation = axis_angle(params.axis_dir, 2.0 * kPi * s);
      pose.translation = params.axis_point - pose.rotation * params.axis_point;
      break;
  }
  return pose;
}

inline RigidPose part_pose(const ArticulationParams& params, int state, double radius) {
  return pose_for_value(params, state_value(params, state), radius);
}

inline Vec3 pose_point(const Vec3& x, const ArticulationParams& params, int state,
                       double radius) {
  const double s = state_value(params, state);
  if (s == 0.0) return x;
  switch (params.motion) {
    case MotionType::Static:
      return x;
    case MotionType::Prismatic:
      return x + 2.0 * radius * s * params.axis_dir;
    case MotionType::Revolute:
      return params.axis_point +
             axis_angle(params.axis_dir, 2.0 * kPi * s) * (x - params.axis_point);
  }
  return x;
}

/// Moves a world ray into the part's rest frame so the part's box can stay
/// axis-aligned. Ray parameters are preserved: origin' + t dir' is the rest
/// position of the world point origin + t dir.
inline std::pair<Vec3, Vec3> inverse_transform_ray(const Vec3& origin, const Vec3& dir,
                                                   const ArticulationParams& params, int state,
                                                   double radius) {
  const double s = state_value(params, state);
  if (s == 0.0) return {origin, dir};
  switch (params.motion) {
    case MotionType::Static:
      return {origin, dir};
    case MotionType::Prismatic:
      return {origin - 2.0 * radius * s * params.axis_dir, dir};
    case MotionType::Revolute: {
      const Mat3 r = axis_angle(params.axis_dir, -2.0 * kPi * s);
      return {params.axis_point + r * (origin - params.axis_point), r * dir};
    }
  }
  return {origin, dir};
}

}  // namespace art
