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
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "art/datagen.hpp"

namespace {

namespace fs = std::filesystem;
using art::MotionType;
using art::SceneTruth;
using art::Vec3;

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("art_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

TEST(Sample, SameSeedSameScene) {
  for (const auto& t : art::template_names()) {
    const SceneTruth a = art::sample_scene(t, 42);
    const SceneTruth b = art::sample_scene(t, 42);
    EXPECT_EQ(art::manifest_json(a), art::manifest_json(b)) << t;
    const SceneTruth c = art::sample_scene(t, 43);
    EXPECT_NE(art::manifest_json(a)["parts"], art::manifest_json(c)["parts"]) << t;
  }
}

TEST(Sample, TemplateMotionTypes) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SceneTruth d = art::sample_scene("drawer-chest", seed);
    ASSERT_GE(d.parts.size(), 2u);
    EXPECT_EQ(d.parts[0].articulation.motion, MotionType::Static);
    for (std::size_t i = 1; i < d.parts.size(); ++i) {
      EXPECT_EQ(d.parts[i].articulation.motion, MotionType::Prismatic);
      // Drawers slide out through the front face.
      EXPECT_LT((d.parts[i].articulation.axis_dir - Vec3(0, 0, -1)).norm(), 1e-12);
    }
    const SceneTruth c = art::sample_scene("door-cabinet", seed);
    for (std::size_t i = 1; i < c.parts.size(); ++i) {
      EXPECT_EQ(c.parts[i].articulation.motion, MotionType::Revolute);
      EXPECT_NEAR(std::abs(c.parts[i].articulation.axis_dir.y()), 1.0, 1e-12);
    }
    const SceneTruth l = art::sample_scene("laptop", seed);
    ASSERT_EQ(l.parts.size(), 2u);
    EXPECT_EQ(l.parts[1].articulation.motion, MotionType::Revolute);
    const SceneTruth m = art::sample_scene("mixed", seed);
    ASSERT_EQ(m.parts.size(), 3u);
    int pris = 0, rev = 0;
    for (std::size_t i = 1; i < 3; ++i) {
      pris += m.parts[i].articulation.motion == MotionType::Prismatic;
      rev += m.parts[i].articulation.motion == MotionType::Revolute;
    }
    EXPECT_EQ(pris, 1);
    EXPECT_EQ(rev, 1);
  }
}

TEST(Sample, HingeOnPartSurface) {
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    for (const char* t : {"door-cabinet", "laptop"}) {
      const SceneTruth s = art::sample_scene(t, seed);
      for (std::size_t i = 1; i < s.parts.size(); ++i) {
        const auto& a = s.parts[i].articulation;
        const Vec3 lo = s.parts[i].shape.center - s.parts[i].shape.half;
        const Vec3 hi = s.parts[i].shape.center + s.parts[i].shape.half;
        // The hinge line lies on the part surface.
        int on_faces = 0;
        for (int k = 0; k < 3; ++k) {
          if (std::abs(a.axis_dir[k]) > 0.5) continue;
          const double d = std::min(std::abs(a.axis_point[k] - lo[k]), std::abs(a.axis_point[k] - hi[k]));
          on_faces += d <= 1e-9;
          EXPECT_GE(a.axis_point[k], lo[k] - 1e-9);
          EXPECT_LE(a.axis_point[k], hi[k] + 1e-9);
        }
        EXPECT_GE(on_faces, 1) << t << " seed " << seed;
      }
    }
}

TEST(Sample, SlotBudgetCapsParts) {
  for (const auto& t : art::template_names())
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      EXPECT_LE(art::sample_scene(t, seed, 2).parts.size(), 2u);
      EXPECT_LE(art::sample_scene(t, seed, 3).parts.size(), 3u);
    }
}

TEST(Sample, UnknownTemplate) {
  EXPECT_THROW(art::sample_scene("wardrobe", 0), art::ConfigError);
}

TEST(Sample, SweptVolumeStaysInsideSphere) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (const auto& t : art::template_names())
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
      const SceneTruth s = art::sample_scene(t, seed);
      EXPECT_TRUE(art::scene_valid(s));
      const double r = s.frame.radius;
      double worst = 0.0;
      for (const auto& p : s.parts) {
        art::ArticulationParams a = p.articulation;
        const Vec3 lo = a.box_center - 0.5 * a.box_size, hi = a.box_center + 0.5 * a.box_size;
        std::vector<double> values = a.dynamics;
        for (int k = 0; k < 200; ++k) values.push_back(p.limit * u(rng));
        values.push_back(p.limit);
        for (double v : values) {
          a.dynamics = {v};
          for (int k = 0; k < 64; ++k) {
            // Box corners plus random points on the box surface.
            Vec3 x;
            for (int c = 0; c < 3; ++c) x[c] = k < 8 ? (k >> c & 1 ? hi[c] : lo[c]) : lo[c] + u(rng) * (hi[c] - lo[c]);
            if (k >= 8) x[k % 3] = u(rng) < 0.5 ? lo[k % 3] : hi[k % 3];
            worst = std::max(worst, art::pose_point(x, a, 0, r).norm());
          }
        }
      }
      EXPECT_LT(worst, r) << t << " seed " << seed;
    }
}

TEST(Sample, BoxesContainShapes) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (const auto& t : art::template_names()) {
    const SceneTruth s = art::sample_scene(t, 3);
    for (const auto& p : s.parts) {
      const art::AABB box = art::part_box(p.articulation);
      for (int k = 0; k < 2000; ++k) {
        // Points just outside the box lie outside the shape.
        Vec3 x(u(rng), u(rng), u(rng));
        x[k % 3] = k % 2 ? 1.0 : -1.0;
        const Vec3 w = box.center + x.cwiseProduct(0.5 * box.size) * 1.0001;
        EXPECT_GT(p.shape.sdf(w), 0.0);
      }
    }
  }
}

TEST(Sample, DynamicsMatchTheStateScheme) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SceneTruth s = art::sample_scene("mixed", seed);
    for (std::size_t i = 1; i < s.parts.size(); ++i) {
      const auto& p = s.parts[i];
      ASSERT_EQ(p.articulation.state_count(), 2);
      EXPECT_GE(p.articulation.dynamics[0], 0.0);
      EXPECT_LE(p.articulation.dynamics[0], 0.3 * p.limit + 1e-15);
      EXPECT_GE(p.articulation.dynamics[1], 0.6 * p.limit - 1e-15);
      EXPECT_LE(p.articulation.dynamics[1], p.limit + 1e-15);
    }
    for (double d : s.parts[0].articulation.dynamics) EXPECT_EQ(d, 0.0);
  }
}

TEST(Ordering, LowerDrawerFirst) {
  int stacked = 0;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const SceneTruth s = art::sample_scene("drawer-chest", seed);
    if (s.parts.size() < 3) continue;
    ++stacked;
    EXPECT_LT(s.parts[1].articulation.box_center.y(), s.parts[2].articulation.box_center.y());
  }
  EXPECT_GT(stacked, 0);
}

TEST(Ordering, RuleAndStability) {
  std::vector<art::PrimitivePart> parts(5);
  parts[1].articulation.box_center = Vec3(0.1, 0.2, 0.0);
  parts[2].articulation.box_center = Vec3(0.0, -0.1, 0.0);
  parts[3].articulation.box_center = Vec3(0.1, 0.2, 0.0);
  parts[4].articulation.box_center = Vec3(-0.1, 0.2, 0.0);
  std::vector<int> expect{0, 2, 4, 1, 3};
  EXPECT_EQ(art::canonical_order(parts), expect);
  parts[4].articulation.box_center = Vec3(0.3, 0.2, -0.1);
  expect = {0, 2, 4, 1, 3};
  EXPECT_EQ(art::canonical_order(parts), expect);
}

TEST(Ordering, IndependentOfGenerationOrder) {
  for (std::uint64_t seed = 0; seed < 10; ++seed)
    for (const char* t : {"mixed", "door-cabinet", "drawer-chest"}) {
      const SceneTruth s = art::sample_scene(t, seed);
      std::vector<art::PrimitivePart> shuffled(s.parts.begin(), s.parts.end());
      std::reverse(shuffled.begin() + 1, shuffled.end());
      const auto order = art::canonical_order(shuffled);
      for (std::size_t i = 0; i < order.size(); ++i)
        EXPECT_EQ(shuffled[order[i]].articulation.box_center, s.parts[i].articulation.box_center);
    }
}

TEST(Truth, DisjointPartsHaveDisjointMasks) {
  // Two parts far apart laterally: neither mask leaks into the other's pixels.
  SceneTruth s = art::sample_scene("door-cabinet", 0);
  s.parts.resize(2);
  s.parts[0] = art::detail::make_part("a", Vec3(-0.25, 0, 0), Vec3(0.08, 0.1, 0.08), 0.01, MotionType::Static,
                                      Vec3::UnitY(), Vec3::Zero(), 0.0, art::Albedo{});
  s.parts[1] = art::detail::make_part("b", Vec3(0.25, 0, 0), Vec3(0.08, 0.1, 0.08), 0.01,
                                      MotionType::Prismatic, Vec3(0, 0, -1), Vec3(0.25, 0, 0), 0.1, art::Albedo{});
  for (auto& p : s.parts) p.articulation.dynamics = {0.0, 0.05};
  s.frame.part_count = 2;
  art::render_truth(s);
  for (int v = 0; v < s.views(); ++v)
    for (int t = 0; t < 2; ++t) {
      const auto& a = s.part_mask[0][v][t];
      const auto& b = s.part_mask[1][v][t];
      double overlap = 0.0, sum_err = 0.0;
      for (std::size_t i = 0; i < a.data.size(); ++i) {
        overlap = std::max(overlap, static_cast<double>(std::min(a.data[i], b.data[i])));
        sum_err = std::max(sum_err, std::abs(static_cast<double>(s.composite_mask[v][t].data[i]) - a.data[i] - b.data[i]));
      }
      EXPECT_LE(overlap, 1e-3);
      EXPECT_LE(sum_err, 1e-3);
    }
}

TEST(Truth, CompositeIsOverBlendForDepthSeparatedParts) {
  SceneTruth s = art::sample_scene("door-cabinet", 0);
  s.parts.resize(2);
  s.parts[0] = art::detail::make_part("back", Vec3(0, 0, 0.2), Vec3(0.15, 0.15, 0.05), 0.01, MotionType::Static,
                                      Vec3::UnitY(), Vec3::Zero(), 0.0, art::Albedo{Vec3(0.2, 0.4, 0.8), Vec3(0.2, 0.4, 0.8), -1, 0});
  s.parts[1] = art::detail::make_part("front", Vec3(0.05, 0, -0.2), Vec3(0.1, 0.1, 0.05), 0.01,
                                      MotionType::Prismatic, Vec3(1, 0, 0), Vec3::Zero(), 0.1,
                                      art::Albedo{Vec3(0.9, 0.3, 0.1), Vec3(0.9, 0.3, 0.1), -1, 0});
  for (auto& p : s.parts) p.articulation.dynamics = {0.0, 0.0};
  s.frame.part_count = 2;
  const art::Camera cam = art::look_at(Vec3(0, 0, -2.5), Vec3::Zero(), Vec3::UnitY(), 0.4, 32, 32);
  s.cameras.assign(1, std::vector<art::Camera>(2, cam));
  s.render.supersample = 1;  // the box filter does not commute with over-blending
  art::render_truth(s);
  const auto& f = s.part_rgb[1][0][0];
  const auto& fm = s.part_mask[1][0][0];
  const auto& b = s.part_rgb[0][0][0];
  const auto& bm = s.part_mask[0][0][0];
  double worst = 0.0;
  for (int i = 0; i < 32 * 32; ++i) {
    const double m = fm.data[i];
    worst = std::max(worst, std::abs(s.composite_mask[0][0].data[i] - (m + (1 - m) * bm.data[i])));
    for (int k = 0; k < 3; ++k)
      worst = std::max(worst, std::abs(s.composite_rgb[0][0].data[3 * i + k] -
                                       (f.data[3 * i + k] + (1 - m) * b.data[3 * i + k])));
  }
  EXPECT_LE(worst, 1e-5);
}

TEST(Truth, ZeroMotionStateReproducesRest) {
  SceneTruth s = art::sample_scene("drawer-chest", 4);
  for (auto& p : s.parts) p.articulation.dynamics[0] = 0.0;
  SceneTruth rest = s;
  for (auto& p : rest.parts) p.articulation.motion = MotionType::Static;
  const auto a = art::render_truth_view(s, s.cameras[1][0], 0);
  const auto b = art::render_truth_view(rest, rest.cameras[1][0], 0);
  EXPECT_EQ(a.rgb.data, b.rgb.data);
  EXPECT_EQ(a.mask.data, b.mask.data);
}

TEST(Truth, PhysicalMotionRoundTrip) {
  for (const auto& t : art::template_names())
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const SceneTruth s = art::sample_scene(t, seed);
      for (const auto& p : s.parts)
        for (double d : p.articulation.dynamics) {
          const double x = art::physical_motion(p.articulation.motion, d, s.frame.radius);
          const double back = art::dynamics_from_physical(p.articulation.motion, x, s.frame.radius);
          if (p.articulation.motion == MotionType::Static)
            EXPECT_EQ(back, 0.0);
          else
            EXPECT_DOUBLE_EQ(back, d);
        }
    }
  EXPECT_DOUBLE_EQ(art::physical_motion(MotionType::Revolute, 0.25, 0.5), art::kPi / 2);
  EXPECT_DOUBLE_EQ(art::physical_motion(MotionType::Prismatic, 0.25, 0.5), 0.25);
}

class DatasetIo : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(temp_dir("dataset"));
    scene_ = new SceneTruth(art::sample_scene("mixed", 7));
    art::render_truth(*scene_);
    art::write_scene(*scene_, *dir_ / "scene_0000");
  }
  static void TearDownTestSuite() {
    fs::remove_all(*dir_);
    delete dir_;
    delete scene_;
  }
  static fs::path* dir_;
  static SceneTruth* scene_;
};
fs::path* DatasetIo::dir_ = nullptr;
SceneTruth* DatasetIo::scene_ = nullptr;

TEST_F(DatasetIo, FileNames) {
  const fs::path d = *dir_ / "scene_0000";
  EXPECT_TRUE(fs::exists(d / "manifest.json"));
  EXPECT_TRUE(fs::exists(d / "part0_v0_s0.ppm"));
  EXPECT_TRUE(fs::exists(d / "part2_v3_s1.pgm"));
  EXPECT_TRUE(fs::exists(d / "composite_v3_s1.ppm"));
  EXPECT_TRUE(fs::exists(d / "composite_v0_s0.pgm"));
  std::ifstream f(d / "part1_v2_s0.ppm", std::ios::binary);
  std::string magic;
  f >> magic;
  EXPECT_EQ(magic, "P6");
}

TEST_F(DatasetIo, RoundTrip) {
  const SceneTruth r = art::read_scene(*dir_ / "scene_0000");
  EXPECT_EQ(art::manifest_json(r), art::manifest_json(*scene_));
  ASSERT_TRUE(r.has_images());
  for (std::size_t p = 0; p < r.parts.size(); ++p)
    for (int v = 0; v < r.views(); ++v)
      for (int t = 0; t < 2; ++t) {
        EXPECT_LE(art::max_abs_diff(r.part_rgb[p][v][t], scene_->part_rgb[p][v][t]), 0.5 / 255 + 1e-6);
        EXPECT_LE(art::max_abs_diff(r.part_mask[p][v][t], scene_->part_mask[p][v][t]), 0.5 / 255 + 1e-6);
      }
  EXPECT_EQ(art::list_scenes(*dir_).size(), 1u);
}

TEST_F(DatasetIo, LowerResolutionRerenderMatchesDownsampledImages) {
  const SceneTruth r = art::read_scene(*dir_ / "scene_0000");
  for (int v = 0; v < r.views(); ++v)
    for (int t = 0; t < 2; ++t) {
      const art::Camera cam = r.cameras[v][t].resized(16, 16);
      const auto low = art::render_truth_view(r, cam, t);
      EXPECT_LE(art::mean_abs_diff(low.rgb, art::downsample(r.composite_rgb[v][t], 2)), 0.02);
      EXPECT_LE(art::mean_abs_diff(low.mask, art::downsample(r.composite_mask[v][t], 2)), 0.02);
    }
}

TEST_F(DatasetIo, CorruptInputsRaiseDataErrors) {
  const fs::path bad = *dir_ / "bad";
  fs::create_directories(bad);
  EXPECT_THROW(art::read_scene(bad), art::DataError);
  std::ofstream(bad / "manifest.json") << "{\"format\": \"artrecon-scene\"}";
  EXPECT_THROW(art::read_scene(bad), art::DataError);
  std::ofstream(bad / "manifest.json") << "{not json";
  EXPECT_THROW(art::read_scene(bad), art::DataError);
  const fs::path trunc = *dir_ / "trunc";
  fs::copy(*dir_ / "scene_0000", trunc);
  fs::resize_file(trunc / "part1_v0_s1.ppm", 20);
  EXPECT_THROW(art::read_scene(trunc), art::DataError);
  EXPECT_NO_THROW(art::read_scene(trunc, false));
  EXPECT_THROW(art::list_scenes(*dir_ / "missing"), art::DataError);
}

}  // namespace
