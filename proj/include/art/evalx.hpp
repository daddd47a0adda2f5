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
// Evaluation: image, geometry and part-level metrics, marching-cubes mesh
// extraction, and OBJ / URDF writers and readers.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <nlohmann/json.hpp>

#include "art/datagen.hpp"
#include "art/detail/mc_tables.hpp"
#include "art/training.hpp"

namespace art {

// ---------------------------------------------------------------------------
// Image metric

inline double psnr(const Image& pred, const Image& gt) {
  if (!pred.same_shape(gt)) throw ContractError("psnr: image shapes differ");
  return image_psnr(pred, gt);
}

// ---------------------------------------------------------------------------
// Point clouds

/// Uniform-grid nearest-neighbour index over a fixed point set.
class PointGrid {
 public:
  explicit PointGrid(const std::vector<Vec3>& pts) : pts_(pts) {
    require(!pts.empty(), "point grid: empty point set");
    lo_ = pts[0];
    Vec3 hi = pts[0];
    for (const Vec3& p : pts) {
      lo_ = lo_.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    const Vec3 ext = (hi - lo_).cwiseMax(1e-9);
    const double vol = ext.prod();
    cell_ = std::cbrt(vol / std::max<std::size_t>(1, pts.size()) * 2.0);
    cell_ = std::max({cell_, ext.maxCoeff() / 256.0, 1e-9});
    // Flat or elongated sets: coarsen until the cell count is linear in the points.
    const double max_cells = 4.0 * static_cast<double>(pts.size()) + 64.0;
    for (;;) {
      double cells = 1.0;
      for (int a = 0; a < 3; ++a) cells *= std::ceil(ext[a] / cell_) + 1.0;
      if (cells <= max_cells) break;
      cell_ *= 1.25;
    }
    for (int a = 0; a < 3; ++a) dims_[a] = std::max(1, static_cast<int>(std::ceil(ext[a] / cell_)) + 1);
    std::vector<std::size_t> count(static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2] + 1, 0);
    for (const Vec3& p : pts) ++count[cell_index(cell_of(p)) + 1];
    std::partial_sum(count.begin(), count.end(), count.begin());
    start_ = count;
    order_.resize(pts.size());
    std::vector<std::size_t> fill(count.begin(), count.end() - 1);
    for (std::size_t i = 0; i < pts.size(); ++i) order_[fill[cell_index(cell_of(pts[i]))]++] = i;
  }

  /// Distance to the nearest indexed point.
  double nearest(const Vec3& q) const {
    const std::array<int, 3> c = cell_of(q);
    const double outside = outside_distance(q);
    double best = std::numeric_limits<double>::infinity();
    const int max_ring = std::max({dims_[0], dims_[1], dims_[2]});
    for (int ring = 0; ring <= max_ring; ++ring) {
      // Every point in this ring or beyond is at least this far from q.
      const double bound = ring == 0 ? 0.0 : std::hypot((ring - 1) * cell_, outside);
      if (ring > 0 && best <= bound) break;
      visit_ring(c, ring, q, best);
    }
    return best;
  }

 private:
  std::array<int, 3> cell_of(const Vec3& p) const {
    std::array<int, 3> c;
    for (int a = 0; a < 3; ++a)
      c[a] = std::clamp(static_cast<int>(std::floor((p[a] - lo_[a]) / cell_)), 0, dims_[a] - 1);
    return c;
  }
  std::size_t cell_index(const std::array<int, 3>& c) const {
    return (static_cast<std::size_t>(c[0]) * dims_[1] + c[1]) * dims_[2] + c[2];
  }
  double outside_distance(const Vec3& q) const {
    Vec3 d = Vec3::Zero();
    for (int a = 0; a < 3; ++a) {
      const double hi = lo_[a] + dims_[a] * cell_;
      d[a] = std::max({lo_[a] - q[a], q[a] - hi, 0.0});
    }
    return d.norm();
  }
  void visit_ring(const std::array<int, 3>& c, int ring, const Vec3& q, double& best) const {
    const int i0 = std::max(0, c[0] - ring), i1 = std::min(dims_[0] - 1, c[0] + ring);
    const int j0 = std::max(0, c[1] - ring), j1 = std::min(dims_[1] - 1, c[1] + ring);
    const int k0 = std::max(0, c[2] - ring), k1 = std::min(dims_[2] - 1, c[2] + ring);
    auto scan = [&](int i, int j, int k) {
      const std::size_t idx = cell_index({i, j, k});
      for (std::size_t n = start_[idx]; n < start_[idx + 1]; ++n) best = std::min(best, (pts_[order_[n]] - q).norm());
    };
    for (int i = i0; i <= i1; ++i)
      for (int j = j0; j <= j1; ++j) {
        if (std::abs(i - c[0]) == ring || std::abs(j - c[1]) == ring) {
          for (int k = k0; k <= k1; ++k) scan(i, j, k);
        } else {
          if (c[2] - ring >= 0) scan(i, j, c[2] - ring);
          if (ring > 0 && c[2] + ring < dims_[2]) scan(i, j, c[2] + ring);
        }
      }
  }

  const std::vector<Vec3>& pts_;
  Vec3 lo_;
  double cell_ = 1.0;
  std::array<int, 3> dims_{1, 1, 1};
  std::vector<std::size_t> start_;
  std::vector<std::size_t> order_;
};

struct ChamferResult {
  double chamfer = 0.0;
  double fscore = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// Symmetric mean nearest-neighbour distance and F-score at threshold tau.
inline ChamferResult chamfer_fscore(const std::vector<Vec3>& pred, const std::vector<Vec3>& gt,
                                    double tau) {
  if (pred.empty() || gt.empty()) throw ContractError("chamfer: empty point cloud");
  require(tau > 0.0, "chamfer: tau must be positive");
  const PointGrid gt_index(gt), pred_index(pred);
  double sum_pg = 0.0, sum_gp = 0.0;
  std::size_t hit_p = 0, hit_g = 0;
  for (const Vec3& p : pred) {
    const double d = gt_index.nearest(p);
    sum_pg += d;
    hit_p += d < tau;
  }
  for (const Vec3& g : gt) {
    const double d = pred_index.nearest(g);
    sum_gp += d;
    hit_g += d < tau;
  }
  ChamferResult r;
  r.chamfer = 0.5 * (sum_pg / pred.size() + sum_gp / gt.size());
  r.precision = static_cast<double>(hit_p) / pred.size();
  r.recall = static_cast<double>(hit_g) / gt.size();
  r.fscore = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// Boxes and matching

inline double generalized_iou(const AABB& a, const AABB& b) {
  require(a.valid() && b.valid(), "gIoU: invalid box");
  const Vec3 ilo = a.lo().cwiseMax(b.lo()), ihi = a.hi().cwiseMin(b.hi());
  const double inter = (ihi - ilo).cwiseMax(0.0).prod();
  const double uni = a.volume() + b.volume() - inter;
  const Vec3 clo = a.lo().cwiseMin(b.lo()), chi = a.hi().cwiseMax(b.hi());
  const double enclose = (chi - clo).prod();
  return inter / uni - (enclose - uni) / enclose;
}

/// Minimum-cost assignment of every row to a distinct column (rows <= cols),
/// shortest augmenting paths with potentials. Returns the column of each row.
inline std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  if (n == 0) return {};
  const int m = static_cast<int>(cost[0].size());
  require(n <= m, "hungarian: more rows than columns");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assign(n, -1);
  for (int j = 1; j <= m; ++j)
    if (p[j] != 0) assign[p[j] - 1] = j - 1;
  return assign;
}

struct PartMatch {
  int pred = -1;
  int gt = -1;
  double cost = 2.0;  // 1 - gIoU; 2 for an unmatched part
  double centroid_distance = 0.0;
};

struct MatchReport {
  std::vector<PartMatch> matches;  // matched pairs, then unmatched parts
  double d_giou = 0.0;
  double d_cdist = 0.0;
};

inline MatchReport match_parts(const std::vector<AABB>& pred, const std::vector<AABB>& gt) {
  MatchReport r;
  const std::size_t n = pred.size(), m = gt.size();
  if (n == 0 && m == 0) return r;
  const bool transpose = n > m;
  const std::size_t rows = transpose ? m : n, cols = transpose ? n : m;
  std::vector<std::vector<double>> cost(rows, std::vector<double>(cols));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      const AABB& a = transpose ? pred[j] : pred[i];
      const AABB& b = transpose ? gt[i] : gt[j];
      cost[i][j] = 1.0 - generalized_iou(a, b);
    }
  const std::vector<int> assign = hungarian(cost);
  std::vector<char> pred_used(n, 0), gt_used(m, 0);
  double cd = 0.0, sum = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    PartMatch pm;
    pm.pred = transpose ? assign[i] : static_cast<int>(i);
    pm.gt = transpose ? static_cast<int>(i) : assign[i];
    pm.cost = cost[i][assign[i]];
    pm.centroid_distance = (pred[pm.pred].center - gt[pm.gt].center).norm();
    pred_used[pm.pred] = gt_used[pm.gt] = 1;
    sum += pm.cost;
    cd += pm.centroid_distance;
    r.matches.push_back(pm);
  }
  std::vector<PartMatch> unmatched;
  for (std::size_t i = 0; i < n; ++i)
    if (!pred_used[i]) r.matches.push_back(PartMatch{static_cast<int>(i), -1, 2.0, 0.0});
  for (std::size_t j = 0; j < m; ++j)
    if (!gt_used[j]) r.matches.push_back(PartMatch{-1, static_cast<int>(j), 2.0, 0.0});
  const std::size_t total = std::max(n, m);
  r.d_giou = (sum + 2.0 * (total - rows)) / total;
  r.d_cdist = rows > 0 ? cd / rows : 0.0;
  return r;
}

// ---------------------------------------------------------------------------
// Meshes

struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Vec3> colors;
  std::vector<std::array<int, 3>> faces;

  bool empty() const { return faces.empty(); }
};

/// Marching cubes over an n^3 grid of scalar values spanning [lo, hi].
/// values are indexed [i][j][k] along x, y, z with k fastest.
inline Mesh marching_cubes(const std::vector<double>& values, int n, const Vec3& lo, const Vec3& hi,
                           double iso = 0.0) {
  require(n >= 2 && values.size() == static_cast<std::size_t>(n) * n * n, "marching cubes: grid size");
  using namespace detail;
  auto at = [&](int i, int j, int k) { return values[(static_cast<std::size_t>(i) * n + j) * n + k]; };
  const Vec3 step = (hi - lo) / (n - 1);
  auto pos = [&](int i, int j, int k) { return Vec3(lo.x() + i * step.x(), lo.y() + j * step.y(), lo.z() + k * step.z()); };
  Mesh mesh;
  std::unordered_map<std::uint64_t, int> edge_vertex;
  auto vertex_on = [&](int i, int j, int k, int ca, int cb) {
    const int* oa = kMcCornerOffset[ca];
    const int* ob = kMcCornerOffset[cb];
    std::array<int, 3> a{i + oa[0], j + oa[1], k + oa[2]}, b{i + ob[0], j + ob[1], k + ob[2]};
    if (std::tie(b[0], b[1], b[2]) < std::tie(a[0], a[1], a[2])) std::swap(a, b);
    int axis = 0;
    while (a[axis] == b[axis]) ++axis;
    const std::uint64_t key =
        ((static_cast<std::uint64_t>(a[0]) * n + a[1]) * n + a[2]) * 3 + static_cast<std::uint64_t>(axis);
    auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    const double va = at(a[0], a[1], a[2]), vb = at(b[0], b[1], b[2]);
    const double denom = vb - va;
    const double f = std::abs(denom) > 1e-300 ? std::clamp((iso - va) / denom, 0.0, 1.0) : 0.5;
    const Vec3 p = pos(a[0], a[1], a[2]) + f * (pos(b[0], b[1], b[2]) - pos(a[0], a[1], a[2]));
    mesh.vertices.push_back(p);
    const int id = static_cast<int>(mesh.vertices.size()) - 1;
    edge_vertex.emplace(key, id);
    return id;
  };
  for (int i = 0; i + 1 < n; ++i)
    for (int j = 0; j + 1 < n; ++j)
      for (int k = 0; k + 1 < n; ++k) {
        int index = 0;
        for (int c = 0; c < 8; ++c) {
          const int* o = kMcCornerOffset[c];
          if (at(i + o[0], j + o[1], k + o[2]) < iso) index |= 1 << c;
        }
        if (kMcEdgeTable[index] == 0) continue;
        for (int t = 0; kMcTriTable[index][t] != -1; t += 3) {
          std::array<int, 3> tri;
          for (int q = 0; q < 3; ++q) {
            const int e = kMcTriTable[index][t + q];
            tri[q] = vertex_on(i, j, k, kMcEdgeCorners[e][0], kMcEdgeCorners[e][1]);
          }
          if (tri[0] != tri[1] && tri[1] != tri[2] && tri[0] != tri[2]) mesh.faces.push_back(tri);
        }
      }
  return mesh;
}

/// Iso-surface of a part field over its box, in rest-frame object units, with
/// vertex colors from the field.
inline Mesh extract_mesh(const FieldSource& field, const ArticulationParams& params, int grid_res,
                         double iso = 0.0) {
  require(grid_res >= 8, "extract_mesh: grid_res must be >= 8");
  const AABB box = part_box(params);
  if (!box.valid()) throw ContractError("extract_mesh: degenerate part box");
  const int n = grid_res;
  std::vector<Vec3> x(static_cast<std::size_t>(n) * n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        x[(static_cast<std::size_t>(i) * n + j) * n + k] =
            Vec3(-1.0 + 2.0 * i / (n - 1), -1.0 + 2.0 * j / (n - 1), -1.0 + 2.0 * k / (n - 1));
  std::vector<double> sdf(x.size());
  std::vector<Vec3> rgb(x.size());
  field.evaluate(x, sdf, rgb);
  Mesh local = marching_cubes(sdf, n, -Vec3::Ones(), Vec3::Ones(), iso);
  Mesh out;
  out.faces = std::move(local.faces);
  if (local.vertices.empty()) return out;
  std::vector<double> vs(local.vertices.size());
  out.colors.resize(local.vertices.size());
  std::vector<Vec3> vclamped(local.vertices.size());
  for (std::size_t i = 0; i < vclamped.size(); ++i) vclamped[i] = local.vertices[i].cwiseMax(-1.0).cwiseMin(1.0);
  field.evaluate(vclamped, vs, out.colors);
  const Vec3 half = 0.5 * box.size;
  for (const Vec3& v : local.vertices) out.vertices.push_back(box.center + v.cwiseProduct(half));
  return out;
}

template <typename T>
Mesh extract_mesh(const HexaPlane<T>& hp, const FieldHeads<T>& heads, const ArticulationParams& params,
                  double radius, int grid_res, double iso = 0.0) {
  const LearnedField<T> field(hp, heads, 0.5 * params.box_size, radius);
  return extract_mesh(field, params, grid_res, iso);
}

inline Mesh transform_mesh(const Mesh& m, const RigidPose& pose) {
  Mesh out = m;
  for (Vec3& v : out.vertices) v = pose.apply(v);
  return out;
}

inline void append_mesh(Mesh& dst, const Mesh& src) {
  const int base = static_cast<int>(dst.vertices.size());
  dst.vertices.insert(dst.vertices.end(), src.vertices.begin(), src.vertices.end());
  dst.colors.insert(dst.colors.end(), src.colors.begin(), src.colors.end());
  for (const auto& f : src.faces) dst.faces.push_back({f[0] + base, f[1] + base, f[2] + base});
}

/// Area-weighted surface samples.
inline std::vector<Vec3> sample_surface(const Mesh& m, int count, std::uint64_t seed) {
  std::vector<Vec3> out;
  if (m.faces.empty() || count <= 0) return out;
  std::vector<double> cdf(m.faces.size());
  double total = 0.0;
  for (std::size_t i = 0; i < m.faces.size(); ++i) {
    const auto& f = m.faces[i];
    total += 0.5 * (m.vertices[f[1]] - m.vertices[f[0]]).cross(m.vertices[f[2]] - m.vertices[f[0]]).norm();
    cdf[i] = total;
  }
  if (!(total > 0.0)) return out;
  std::mt19937_64 rng(mix_seed(seed, 0x5af));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  out.reserve(count);
  for (int s = 0; s < count; ++s) {
    const double r = u(rng) * total;
    const std::size_t i = std::min<std::size_t>(std::lower_bound(cdf.begin(), cdf.end(), r) - cdf.begin(),
                                                cdf.size() - 1);
    double a = u(rng), b = u(rng);
    if (a + b > 1.0) {
      a = 1.0 - a;
      b = 1.0 - b;
    }
    const auto& f = m.faces[i];
    out.push_back(m.vertices[f[0]] + a * (m.vertices[f[1]] - m.vertices[f[0]]) +
                  b * (m.vertices[f[2]] - m.vertices[f[0]]));
  }
  return out;
}

namespace detail {
inline std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}
}  // namespace detail

/// OBJ with extended "v x y z r g b" vertex lines.
inline void write_obj(const std::filesystem::path& path, const Mesh& m) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << std::setprecision(9);
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    const Vec3& v = m.vertices[i];
    const Vec3 c = i < m.colors.size() ? m.colors[i] : Vec3::Constant(0.7);
    f << "v " << v.x() << " " << v.y() << " " << v.z() << " " << c.x() << " " << c.y() << " " << c.z() << "\n";
  }
  for (const auto& t : m.faces) f << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
}

inline Mesh read_obj(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read " + path.string());
  Mesh m;
  std::string line;
  while (std::getline(f, line)) {
    std::istringstream is(line);
    std::string tag;
    is >> tag;
    if (tag == "v") {
      Vec3 v, c = Vec3::Constant(0.7);
      is >> v.x() >> v.y() >> v.z();
      if (!is) throw DataError(path.string() + ": bad vertex line");
      double r, g, b;
      if (is >> r >> g >> b) c = Vec3(r, g, b);
      m.vertices.push_back(v);
      m.colors.push_back(c);
    } else if (tag == "f") {
      std::array<int, 3> t;
      for (int& k : t) {
        std::string tok;
        is >> tok;
        if (tok.empty()) throw DataError(path.string() + ": bad face line");
        k = std::stoi(tok.substr(0, tok.find('/'))) - 1;
        if (k < 0 || k >= static_cast<int>(m.vertices.size())) throw DataError(path.string() + ": face index out of range");
      }
      m.faces.push_back(t);
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// URDF

struct UrdfPart {
  std::string name;
  ArticulationParams params;
  Mesh mesh;
};

struct UrdfJoint {
  std::string name, type, parent, child;
  Vec3 origin = Vec3::Zero();
  Vec3 axis = Vec3::UnitZ();
  double lower = 0.0, upper = 0.0;
};

struct UrdfLink {
  std::string name;
  std::string mesh;  // empty without a visual
  Vec3 visual_origin = Vec3::Zero();
};

struct UrdfModel {
  std::string name;
  std::vector<UrdfLink> links;
  std::vector<UrdfJoint> joints;
};

/// Writes <dir>/<robot>.urdf and one OBJ per non-empty part mesh under
/// <dir>/meshes. Joint frames sit at the pivot; each child visual is offset
/// back so meshes stay in rest-frame coordinates. Returns the warnings.
inline std::vector<std::string> export_urdf(const std::filesystem::path& dir, const std::string& robot,
                                            const std::vector<UrdfPart>& parts, double radius) {
  require(!parts.empty(), "export_urdf: no parts");
  std::vector<std::string> warnings;
  std::filesystem::create_directories(dir / "meshes");
  auto v3 = [](const Vec3& v) {
    return detail::fmt_double(v.x()) + " " + detail::fmt_double(v.y()) + " " + detail::fmt_double(v.z());
  };
  std::ostringstream x;
  x << "<?xml version=\"1.0\"?>\n<robot name=\"" << robot << "\">\n";
  for (std::size_t i = 0; i < parts.size(); ++i) {
    const UrdfPart& p = parts[i];
    const bool movable = i > 0 && p.params.motion != MotionType::Static;
    x << "  <link name=\"" << p.name << "\">\n";
    if (p.mesh.empty()) {
      warnings.push_back("part " + p.name + " has an empty mesh; link written without a visual");
    } else {
      const std::string file = "meshes/" + p.name + ".obj";
      write_obj(dir / file, p.mesh);
      const Vec3 off = movable ? Vec3(-p.params.axis_point) : Vec3::Zero();
      x << "    <visual>\n      <origin xyz=\"" << v3(off) << "\" rpy=\"0 0 0\"/>\n"
        << "      <geometry><mesh filename=\"" << file << "\"/></geometry>\n    </visual>\n";
    }
    x << "  </link>\n";
  }
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const UrdfPart& p = parts[i];
    const bool prismatic = p.params.motion == MotionType::Prismatic;
    const bool revolute = p.params.motion == MotionType::Revolute;
    const std::string type = prismatic ? "prismatic" : revolute ? "revolute" : "fixed";
    x << "  <joint name=\"joint_" << p.name << "\" type=\"" << type << "\">\n"
      << "    <parent link=\"" << parts[0].name << "\"/>\n"
      << "    <child link=\"" << p.name << "\"/>\n"
      << "    <origin xyz=\"" << v3(type == "fixed" ? Vec3::Zero() : p.params.axis_point) << "\" rpy=\"0 0 0\"/>\n";
    if (type != "fixed") {
      const double lim = prismatic ? 2.0 * radius : 2.0 * kPi;
      x << "    <axis xyz=\"" << v3(p.params.axis_dir) << "\"/>\n"
        << "    <limit lower=\"" << detail::fmt_double(-lim) << "\" upper=\"" << detail::fmt_double(lim)
        << "\" effort=\"10\" velocity=\"1\"/>\n";
    }
    x << "  </joint>\n";
  }
  x << "</robot>\n";
  std::ofstream f(dir / (robot + ".urdf"));
  f << x.str();
  if (!f) throw DataError("cannot write URDF in " + dir.string());
  return warnings;
}

inline UrdfModel read_urdf(const std::filesystem::path& path) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_xml(path.string(), tree);
  } catch (const pt::xml_parser_error& e) {
    throw DataError(std::string("URDF: ") + e.what());
  }
  auto vec = [](const std::string& s) {
    std::istringstream is(s);
    Vec3 v;
    is >> v.x() >> v.y() >> v.z();
    if (!is) throw DataError("URDF: bad vector '" + s + "'");
    return v;
  };
  UrdfModel m;
  try {
    const pt::ptree& robot = tree.get_child("robot");
    m.name = robot.get<std::string>("<xmlattr>.name");
    for (const auto& [tag, node] : robot) {
      if (tag == "link") {
        UrdfLink l;
        l.name = node.get<std::string>("<xmlattr>.name");
        if (auto vis = node.get_child_optional("visual")) {
          l.mesh = vis->get<std::string>("geometry.mesh.<xmlattr>.filename");
          l.visual_origin = vec(vis->get<std::string>("origin.<xmlattr>.xyz", "0 0 0"));
        }
        m.links.push_back(l);
      } else if (tag == "joint") {
        UrdfJoint j;
        j.name = node.get<std::string>("<xmlattr>.name");
        j.type = node.get<std::string>("<xmlattr>.type");
        j.parent = node.get<std::string>("parent.<xmlattr>.link");
        j.child = node.get<std::string>("child.<xmlattr>.link");
        j.origin = vec(node.get<std::string>("origin.<xmlattr>.xyz", "0 0 0"));
        j.axis = vec(node.get<std::string>("axis.<xmlattr>.xyz", "1 0 0"));
        j.lower = node.get<double>("limit.<xmlattr>.lower", 0.0);
        j.upper = node.get<double>("limit.<xmlattr>.upper", 0.0);
        m.joints.push_back(j);
      }
    }
  } catch (const pt::ptree_error& e) {
    throw DataError(std::string("URDF: ") + e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Scene evaluation

struct EvalOptions {
  int n_samples = 64;
  double inv_beta = 200.0;
  int mesh_res = 32;
  int surface_points = 10000;
  double tau_fraction = 0.05;  // F-score threshold relative to r
  int novel_views = 8;
  std::uint64_t seed = 0;
};

struct SceneMetrics {
  std::string scene;
  double psnr = 0.0;
  double chamfer = 0.0;
  double fscore = 0.0;
  double d_giou = 0.0;
  double d_cdist = 0.0;
  int movable = 0;
  int type_correct = 0;
  double axis_error_deg = 0.0;  // mean over movable parts, sign-agnostic
  double pivot_error = 0.0;     // mean point distance over movable parts
  MatchReport matching;
};

inline nlohmann::json metrics_json(const SceneMetrics& m) {
  nlohmann::json table = nlohmann::json::array();
  for (const PartMatch& pm : m.matching.matches)
    table.push_back({{"pred", pm.pred}, {"gt", pm.gt}, {"cost", pm.cost},
                     {"centroid_distance", pm.centroid_distance}});
  return {{"scene", m.scene},
          {"psnr", m.psnr},
          {"chamfer", m.chamfer},
          {"fscore", m.fscore},
          {"d_giou", m.d_giou},
          {"d_cdist", m.d_cdist},
          {"type_accuracy", m.movable ? static_cast<double>(m.type_correct) / m.movable : 1.0},
          {"axis_error_deg", m.axis_error_deg},
          {"pivot_error", m.pivot_error},
          {"matches", table}};
}

/// Fields and articulation of one object, from either a prediction or the
/// analytic ground truth.
struct ObjectView {
  std::vector<const FieldSource*> fields;
  std::vector<ArticulationParams> params;
};

inline Mesh object_mesh(const ObjectView& obj, int res) {
  Mesh all;
  for (std::size_t p = 0; p < obj.fields.size(); ++p) append_mesh(all, extract_mesh(*obj.fields[p], obj.params[p], res));
  return all;
}

/// Compares a predicted object against a ground-truth scene: novel-view
/// composite PSNR over all states, rest-state geometry, matched boxes and
/// index-aligned joint errors.
inline SceneMetrics evaluate_object(const ObjectView& pred, const SceneTruth& truth, const RigConfig& rig,
                                    const EvalOptions& opt) {
  SceneMetrics m;
  const double r = truth.frame.radius;
  const std::vector<Camera> cams = eval_cameras(rig, opt.novel_views);
  std::vector<RenderPart> rp;
  for (std::size_t p = 0; p < pred.fields.size(); ++p) rp.push_back({pred.fields[p], pred.params[p]});
  RenderOptions ro;
  ro.inv_beta = opt.inv_beta;
  ro.n_samples = opt.n_samples;
  double psum = 0.0;
  int n = 0;
  for (const Camera& cam : cams)
    for (int t = 0; t < truth.frame.state_count; ++t) {
      const RenderOutput gt = render_truth_view(truth, cam, t);
      // Same pixel filter as the ground truth.
      const int ss = truth.render.supersample;
      RenderOutput pr = render_composite(rp, t, cam.resized(cam.width * ss, cam.height * ss), r, ro);
      if (ss > 1) pr.rgb = downsample(pr.rgb, ss);
      psum += psnr(pr.rgb, gt.rgb);
      ++n;
    }
  m.psnr = psum / n;

  std::vector<AnalyticField> gt_fields;
  gt_fields.reserve(truth.parts.size());
  ObjectView gt;
  for (const auto& p : truth.parts) gt_fields.emplace_back(p);
  for (std::size_t p = 0; p < truth.parts.size(); ++p) {
    gt.fields.push_back(&gt_fields[p]);
    gt.params.push_back(truth.parts[p].articulation);
  }
  const Mesh pm = object_mesh(pred, opt.mesh_res), gm = object_mesh(gt, opt.mesh_res);
  const std::vector<Vec3> ps = sample_surface(pm, opt.surface_points, opt.seed);
  const std::vector<Vec3> gs = sample_surface(gm, opt.surface_points, opt.seed + 1);
  if (ps.empty() || gs.empty()) {
    m.chamfer = 2.0 * r;
    m.fscore = 0.0;
  } else {
    const ChamferResult c = chamfer_fscore(ps, gs, opt.tau_fraction * r);
    m.chamfer = c.chamfer;
    m.fscore = c.fscore;
  }

  std::vector<AABB> pb, gb;
  for (const auto& a : pred.params) pb.push_back(part_box(a));
  for (const auto& a : gt.params) gb.push_back(part_box(a));
  m.matching = match_parts(pb, gb);
  m.d_giou = m.matching.d_giou;
  m.d_cdist = m.matching.d_cdist;

  const std::size_t common = std::min(pred.params.size(), gt.params.size());
  double ax = 0.0, pv = 0.0;
  for (std::size_t p = 1; p < gt.params.size(); ++p) {
    ++m.movable;
    if (p >= common) continue;
    const ArticulationParams& a = pred.params[p];
    const ArticulationParams& b = gt.params[p];
    m.type_correct += a.motion == b.motion;
    ax += std::acos(std::clamp(std::abs(a.axis_dir.dot(b.axis_dir)), 0.0, 1.0)) * 180.0 / kPi;
    pv += (a.axis_point - b.axis_point).norm();
  }
  if (m.movable) {
    m.axis_error_deg = ax / m.movable;
    m.pivot_error = pv / m.movable;
  }
  return m;
}

template <typename T>
SceneMetrics evaluate_prediction(const Prediction<T>& pred, const SceneTruth& truth, const RigConfig& rig,
                                 const EvalOptions& opt) {
  std::vector<LearnedField<T>> fields;
  fields.reserve(pred.slots.size());
  for (std::size_t p = 0; p < pred.slots.size(); ++p)
    fields.emplace_back(pred.slots[p].hexaplane, pred.slots[p].heads, 0.5 * pred.params[p].box_size,
                        truth.frame.radius);
  ObjectView v;
  for (std::size_t p = 0; p < fields.size(); ++p) {
    v.fields.push_back(&fields[p]);
    v.params.push_back(pred.params[p]);
  }
  return evaluate_object(v, truth, rig, opt);
}

struct MetricSummary {
  int scenes = 0;
  double psnr = 0.0, chamfer = 0.0, fscore = 0.0, d_giou = 0.0, d_cdist = 0.0;
  double type_accuracy = 0.0, axis_error_deg = 0.0, pivot_error = 0.0;
};

inline MetricSummary summarize(const std::vector<SceneMetrics>& ms) {
  MetricSummary s;
  s.scenes = static_cast<int>(ms.size());
  if (ms.empty()) return s;
  int movable = 0, correct = 0;
  for (const auto& m : ms) {
    s.psnr += m.psnr;
    s.chamfer += m.chamfer;
    s.fscore += m.fscore;
    s.d_giou += m.d_giou;
    s.d_cdist += m.d_cdist;
    s.axis_error_deg += m.axis_error_deg * m.movable;
    s.pivot_error += m.pivot_error * m.movable;
    movable += m.movable;
    correct += m.type_correct;
  }
  const double n = static_cast<double>(ms.size());
  s.psnr /= n;
  s.chamfer /= n;
  s.fscore /= n;
  s.d_giou /= n;
  s.d_cdist /= n;
  s.type_accuracy = movable ? static_cast<double>(correct) / movable : 1.0;
  s.axis_error_deg = movable ? s.axis_error_deg / movable : 0.0;
  s.pivot_error = movable ? s.pivot_error / movable : 0.0;
  return s;
}

inline nlohmann::json summary_json(const MetricSummary& s) {
  return {{"summary", true},         {"scenes", s.scenes},     {"psnr", s.psnr},
          {"chamfer", s.chamfer},    {"fscore", s.fscore},     {"d_giou", s.d_giou},
          {"d_cdist", s.d_cdist},    {"type_accuracy", s.type_accuracy},
          {"axis_error_deg", s.axis_error_deg}, {"pivot_error", s.pivot_error}};
}

}  // namespace art
