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
// Per-part hexa-plane fields: six feature grids queried bilinearly, decoded by
// two small MLPs into a signed distance (object units) and an RGB albedo.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "art/common.hpp"

namespace art {

/// Plane order inside a HexaPlane. Each pair k covers two coordinates and is
/// split by the sign of the remaining one.
enum PlaneId : int { kXYPos = 0, kXYNeg = 1, kYZPos = 2, kYZNeg = 3, kXZPos = 4, kXZNeg = 5 };

namespace detail {
// (u axis, v axis, splitting axis) per plane pair: xy, yz, xz.
inline constexpr int kPairAxes[3][3] = {{0, 1, 2}, {1, 2, 0}, {0, 2, 1}};
}  // namespace detail

template <typename T>
struct HexaPlane {
  static constexpr int kPlanes = 6;

  int res = 0;
  int channels = 0;
  std::vector<T> values;  // [plane][row (v)][col (u)][channel]

  HexaPlane() = default;
  HexaPlane(int resolution, int feature_channels, T fill = T(0))
      : res(resolution),
        channels(feature_channels),
        values(static_cast<std::size_t>(kPlanes) * resolution * resolution * feature_channels,
               fill) {
    require(resolution >= 2, "hexa-plane resolution must be at least 2");
    require(feature_channels >= 1, "hexa-plane needs at least one channel");
  }

  std::size_t index(int plane, int row, int col, int ch = 0) const {
    return ((static_cast<std::size_t>(plane) * res + row) * res + col) * channels + ch;
  }
  T& at(int plane, int row, int col, int ch) { return values[index(plane, row, col, ch)]; }
  const T& at(int plane, int row, int col, int ch) const {
    return values[index(plane, row, col, ch)];
  }
  int feature_width() const { return 3 * channels; }

  bool all_finite() const {
    for (const T& v : values)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }
};

/// Bilinear footprint of one plane lookup: four nodes starting at (row, col).
struct PlaneTap {
  int plane = 0;
  int row = 0;
  int col = 0;
  double wu = 0.0;
  double wv = 0.0;

  std::array<double, 4> weights() const {
    return {(1 - wu) * (1 - wv), wu * (1 - wv), (1 - wu) * wv, wu * wv};
  }
};

inline void grid_coord(double x, int res, int& i0, double& frac) {
  const double g = 0.5 * (x + 1.0) * (res - 1);
  i0 = std::clamp(static_cast<int>(std::floor(g)), 0, res - 2);
  frac = g - i0;
}

/// Footprints of the three plane pairs at `x` in [-1,1]^3. The + grid of a pair
/// is used when the splitting coordinate is >= 0.
inline std::array<PlaneTap, 3> plane_taps(const Vec3& x, int res) {
  std::array<PlaneTap, 3> taps;
  for (int k = 0; k < 3; ++k) {
    const int* axes = detail::kPairAxes[k];
    PlaneTap& tap = taps[k];
    tap.plane = 2 * k + (x[axes[2]] >= 0.0 ? 0 : 1);
    grid_coord(x[axes[0]], res, tap.col, tap.wu);
    grid_coord(x[axes[1]], res, tap.row, tap.wv);
  }
  return taps;
}

inline bool in_unit_cube(const Vec3& x) { return (x.array().abs() <= 1.0).all(); }

/// Concatenated (xy, yz, xz) features, written to out[0 .. 3C).
template <typename T>
void gather_features(const HexaPlane<T>& hp, const std::array<PlaneTap, 3>& taps, T* out) {
  const int c = hp.channels;
  for (int k = 0; k < 3; ++k) {
    const PlaneTap& tap = taps[k];
    const std::array<double, 4> w = tap.weights();
    const T* n00 = &hp.values[hp.index(tap.plane, tap.row, tap.col)];
    const T* n01 = n00 + c;
    const T* n10 = n00 + static_cast<std::size_t>(hp.res) * c;
    const T* n11 = n10 + c;
    const T w0 = T(w[0]), w1 = T(w[1]), w2 = T(w[2]), w3 = T(w[3]);
    T* o = out + k * c;
    for (int ch = 0; ch < c; ++ch) o[ch] = w0 * n00[ch] + w1 * n01[ch] + w2 * n10[ch] + w3 * n11[ch];
  }
}

template <typename T>
void scatter_features(HexaPlane<T>& grad, const std::array<PlaneTap, 3>& taps, const T* d_feat) {
  const int c = grad.channels;
  for (int k = 0; k < 3; ++k) {
    const PlaneTap& tap = taps[k];
    const std::array<double, 4> w = tap.weights();
    T* n00 = &grad.values[grad.index(tap.plane, tap.row, tap.col)];
    T* n01 = n00 + c;
    T* n10 = n00 + static_cast<std::size_t>(grad.res) * c;
    T* n11 = n10 + c;
    const T* d = d_feat + k * c;
    for (int ch = 0; ch < c; ++ch) {
      n00[ch] += T(w[0]) * d[ch];
      n01[ch] += T(w[1]) * d[ch];
      n10[ch] += T(w[2]) * d[ch];
      n11[ch] += T(w[3]) * d[ch];
    }
  }
}

template <typename T>
std::vector<T> query_features(const HexaPlane<T>& hp, const Vec3& x_local) {
  if (!in_unit_cube(x_local)) throw ContractError("query_features: point outside [-1,1]^3");
  std::vector<T> out(hp.feature_width());
  gather_features(hp, plane_taps(x_local, hp.res), out.data());
  return out;
}

// ---------------------------------------------------------------------------
// MLP heads

inline double silu(double z) { return z / (1.0 + std::exp(-z)); }
inline double silu_grad(double z) {
  const double s = 1.0 / (1.0 + std::exp(-z));
  return s * (1.0 + z * (1.0 - s));
}

/// Fully connected stack with SiLU between layers and a linear output.
template <typename T>
struct DenseMlp {
  std::vector<Matrix<T>> weights;  // in x out
  std::vector<Matrix<T>> biases;  // 1 x out

  struct Cache {
    std::vector<Matrix<T>> pre;   // pre-activations of hidden layers
    std::vector<Matrix<T>> post;  // activations feeding each layer (post[0] = input)
  };

  static DenseMlp zeros_like(const DenseMlp& other) {
    DenseMlp m;
    for (std::size_t l = 0; l < other.weights.size(); ++l) {
      m.weights.push_back(Matrix<T>::Zero(other.weights[l].rows(), other.weights[l].cols()));
      m.biases.push_back(Matrix<T>::Zero(1, other.biases[l].cols()));
    }
    return m;
  }

  template <typename Rng>
  static DenseMlp make(const std::vector<int>& widths, Rng& rng, double stddev) {
    DenseMlp m;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      Matrix<T> w(widths[l], widths[l + 1]);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = T(truncated_normal(rng, stddev));
      m.weights.push_back(std::move(w));
      m.biases.push_back(Matrix<T>::Zero(1, widths[l + 1]));
    }
    return m;
  }

  int in_width() const { return static_cast<int>(weights.front().rows()); }
  int out_width() const { return static_cast<int>(weights.back().cols()); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) n += weights[l].size() + biases[l].size();
    return n;
  }

  Matrix<T> forward(const Matrix<T>& x, Cache* cache) const {
    Matrix<T> a = x;
    if (cache) {
      cache->pre.clear();
      cache->post.clear();
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
      Matrix<T> z = a * weights[l];
      z.rowwise() += biases[l].row(0);
      if (cache) cache->post.push_back(std::move(a));
      if (l + 1 == weights.size()) return z;
      a = z.unaryExpr([](T v) { return T(silu(static_cast<double>(v))); });
      if (cache) cache->pre.push_back(std::move(z));
    }
    return a;
  }

  /// Accumulates parameter gradients into `grad` and returns d(input).
  Matrix<T> backward(const Cache& cache, const Matrix<T>& d_out, DenseMlp& grad) const {
    Matrix<T> d = d_out;
    for (int l = static_cast<int>(weights.size()) - 1; l >= 0; --l) {
      grad.weights[l].noalias() += cache.post[l].transpose() * d;
      grad.biases[l] += d.colwise().sum();
      Matrix<T> d_in = d * weights[l].transpose();
      if (l == 0) return d_in;
      const Matrix<T>& z = cache.pre[l - 1];
      d = d_in.cwiseProduct(z.unaryExpr([](T v) { return T(silu_grad(static_cast<double>(v))); }));
    }
    return d;
  }
};

template <typename T>
struct FieldHeads {
  DenseMlp<T> sdf;    // 3C -> hidden -> hidden -> 1
  DenseMlp<T> color;  // 3C -> hidden -> hidden -> 3, then sigmoid

  template <typename Rng>
  static FieldHeads make(int feature_width, int hidden, Rng& rng, double stddev) {
    FieldHeads h;
    h.sdf = DenseMlp<T>::make({feature_width, hidden, hidden, 1}, rng, stddev);
    h.color = DenseMlp<T>::make({feature_width, hidden, hidden, 3}, rng, stddev);
    return h;
  }
  static FieldHeads zeros_like(const FieldHeads& o) {
    return FieldHeads{DenseMlp<T>::zeros_like(o.sdf), DenseMlp<T>::zeros_like(o.color)};
  }
  std::size_t parameter_count() const { return sdf.parameter_count() + color.parameter_count(); }

  /// Visits every parameter block with a stable name.
  template <typename F>
  void for_each(F&& f) {
    for (std::size_t l = 0; l < sdf.weights.size(); ++l) {
      f("heads.sdf." + std::to_string(l) + ".w", sdf.weights[l]);
      f("heads.sdf." + std::to_string(l) + ".b", sdf.biases[l]);
    }
    for (std::size_t l = 0; l < color.weights.size(); ++l) {
      f("heads.color." + std::to_string(l) + ".w", color.weights[l]);
      f("heads.color." + std::to_string(l) + ".b", color.biases[l]);
    }
  }
};

/// The sphere prior: |x| - 0.1 r with x in object units relative to the box center.
inline double sdf_bias(const Vec3& x_local, const Vec3& half_extent, double radius) {
  return x_local.cwiseProduct(half_extent).norm() - 0.1 * radius;
}

/// Laplace-CDF density in [0, 1]; 0.5 on the surface.
inline double density(double s, double beta) {
  if (!(beta > 0.0)) throw ConfigError("density: beta must be positive");
  return s >= 0.0 ? 0.5 * std::exp(-s / beta) : 1.0 - 0.5 * std::exp(s / beta);
}

/// d density / d s.
inline double density_grad(double s, double beta) {
  return -0.5 / beta * std::exp(-std::abs(s) / beta);
}

/// Batched evaluation of one part's learned field, keeping what the backward
/// pass needs.
template <typename T>
class FieldBatch {
 public:
  std::vector<double> sdf;
  std::vector<Vec3> rgb;

  void evaluate(const HexaPlane<T>& hp, const FieldHeads<T>& heads,
                std::span<const Vec3> x_local, const Vec3& half_extent, double radius,
                bool keep_cache) {
    const std::size_t n = x_local.size();
    const int width = hp.feature_width();
    require(heads.sdf.in_width() == width && heads.color.in_width() == width,
            "field heads do not match the plane feature width");
    taps_.resize(n);
    features_.resize(static_cast<Eigen::Index>(n), width);
    for (std::size_t i = 0; i < n; ++i) {
      taps_[i] = plane_taps(x_local[i], hp.res);
      gather_features(hp, taps_[i], features_.row(static_cast<Eigen::Index>(i)).data());
    }
    const Matrix<T> s = heads.sdf.forward(features_, keep_cache ? &sdf_cache_ : nullptr);
    const Matrix<T> c = heads.color.forward(features_, keep_cache ? &color_cache_ : nullptr);
    sdf.resize(n);
    rgb.resize(n);
    rgb_sig_.resize(static_cast<Eigen::Index>(n), 3);
    for (std::size_t i = 0; i < n; ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      sdf[i] = static_cast<double>(s(r, 0)) + sdf_bias(x_local[i], half_extent, radius);
      for (int k = 0; k < 3; ++k) {
        const double v = sigmoid(static_cast<double>(c(r, k)));
        rgb[i][k] = v;
        rgb_sig_(r, k) = T(v);
      }
    }
  }

  /// Back-propagates d(loss)/d(sdf) and d(loss)/d(rgb) from the last
  /// evaluate(keep_cache = true) into plane and head gradients.
  void backward(const FieldHeads<T>& heads, std::span<const double> d_sdf,
                std::span<const Vec3> d_rgb, HexaPlane<T>& d_planes, FieldHeads<T>* d_heads) {
    const auto n = static_cast<Eigen::Index>(taps_.size());
    Matrix<T> ds(n, 1), dc(n, 3);
    for (Eigen::Index i = 0; i < n; ++i) {
      ds(i, 0) = T(d_sdf[i]);
      for (int k = 0; k < 3; ++k) {
        const T y = rgb_sig_(i, k);
        dc(i, k) = T(d_rgb[i][k]) * y * (T(1) - y);
      }
    }
    FieldHeads<T> scratch;
    FieldHeads<T>& gh = d_heads ? *d_heads : (scratch = FieldHeads<T>::zeros_like(heads));
    Matrix<T> d_feat = heads.sdf.backward(sdf_cache_, ds, gh.sdf);
    d_feat += heads.color.backward(color_cache_, dc, gh.color);
    for (Eigen::Index i = 0; i < n; ++i) scatter_features(d_planes, taps_[i], d_feat.row(i).data());
  }

 private:
  std::vector<std::array<PlaneTap, 3>> taps_;
  Matrix<T> features_;
  Matrix<T> rgb_sig_;
  typename DenseMlp<T>::Cache sdf_cache_, color_cache_;
};

template <typename T>
struct FieldSample {
  double sdf = 0.0;
  Vec3 rgb = Vec3::Zero();
};

template <typename T>
FieldSample<T> evaluate_field(const HexaPlane<T>& hp, const FieldHeads<T>& heads,
                              const Vec3& x_local, const Vec3& half_extent, double radius) {
  if (!in_unit_cube(x_local)) throw ContractError("field query outside [-1,1]^3");
  FieldBatch<T> batch;
  batch.evaluate(hp, heads, std::span<const Vec3>(&x_local, 1), half_extent, radius, false);
  return {batch.sdf[0], batch.rgb[0]};
}

template <typename T>
double sdf(const HexaPlane<T>& hp, const FieldHeads<T>& heads, const Vec3& x_local,
           const Vec3& half_extent, double radius) {
  return evaluate_field(hp, heads, x_local, half_extent, radius).sdf;
}

/// Unit surface normal from central differences of the SDF in object units.
/// Returns nothing when the gradient vanishes (callers fall back to the view
/// direction). `eps_fraction` is relative to the full box extent per axis.
template <typename T>
std::optional<Vec3> normal(const HexaPlane<T>& hp, const FieldHeads<T>& heads,
                           const Vec3& x_local, const Vec3& half_extent, double radius,
                           double eps_fraction = 1e-3) {
  const double h_local = 2.0 * eps_fraction;
  if (!((x_local.array().abs() + h_local) <= 1.0).all())
    throw ContractError("normal: point closer than eps to the box boundary");
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 xp = x_local, xm = x_local;
    xp[a] += h_local;
    xm[a] -= h_local;
    const double h_obj = h_local * half_extent[a];
    g[a] = (sdf(hp, heads, xp, half_extent, radius) - sdf(hp, heads, xm, half_extent, radius)) /
           (2.0 * h_obj);
  }
  const double n = g.norm();
  if (!(n > 1e-12)) return std::nullopt;
  return g / n;
}

}  // namespace art
