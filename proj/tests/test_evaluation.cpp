#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"

using namespace lookup3d;

namespace {

PointCloud grid_on_plane(const Plane& plane, int n, double spacing, double noise, std::uint64_t seed) {
  const Vec3 u = plane.normal.unitOrthogonal();
  const Vec3 v = plane.normal.cross(u);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  PointCloud out;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      ScanPoint p;
      p.position = plane.point + (i - n / 2) * spacing * u + (j - n / 2) * spacing * v + noise * g(rng) * plane.normal;
      p.x = i;
      p.y = j;
      out.push_back(p);
    }
  }
  return out;
}

}  // namespace

TEST(PlanePca, ExactPlaneHasZeroSigma) {
  const Plane plane{Vec3(0.01, -0.02, 0.75), Vec3(0.1, 0.2, -1.0).normalized()};
  const auto r = plane_pca(grid_on_plane(plane, 20, 1e-3, 0.0, 1));
  EXPECT_NEAR(r.sigma, 0.0, 1e-12);
  EXPECT_NEAR(std::abs(r.plane.normal.dot(plane.normal)), 1.0, 1e-12);
  EXPECT_LT(r.plane.normal.z(), 0.0);
  EXPECT_EQ(r.count, 400u);
}

TEST(PlanePca, RecoversNoiseSigma) {
  const Plane plane{Vec3(0, 0, 0.75), Vec3(0, 0, -1)};
  const auto r = plane_pca(grid_on_plane(plane, 100, 1e-3, 40e-6, 2));
  // 10000 samples: the sample RMS is within a few percent of sigma.
  EXPECT_NEAR(r.sigma, 40e-6, 2e-6);
  EXPECT_GE(r.max_abs, r.sigma);
}

TEST(PlanePca, RigidMotionInvariant) {
  const Plane plane{Vec3(0, 0, 0.75), Vec3(0, 0.3, -1).normalized()};
  const auto cloud = grid_on_plane(plane, 30, 2e-3, 30e-6, 3);
  const auto ref = plane_pca(cloud);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const auto t = RigidTransform::from_axis_angle(Vec3(u(rng), u(rng), u(rng)), Vec3(u(rng), u(rng), 0.5 * u(rng)));
    PointCloud moved = cloud;
    for (auto& p : moved) p.position = t.apply(p.position);
    EXPECT_NEAR(plane_pca(moved).sigma, ref.sigma, 1e-12);
  }
}

TEST(PlanePca, HistogramCountsEveryPoint) {
  const Plane plane{Vec3(0, 0, 0.75), Vec3(0, 0, -1)};
  for (double noise : {0.0, 10e-6, 200e-6}) {
    const auto r = plane_pca(grid_on_plane(plane, 40, 1e-3, noise, 5));
    EXPECT_EQ(r.histogram.total(), r.count);
    EXPECT_EQ(r.histogram.counts.size(), 100u);
  }
}

TEST(PlanePca, SignedDistancePositiveTowardCamera) {
  PointCloud cloud = grid_on_plane(Plane{Vec3(0, 0, 1), Vec3(0, 0, -1)}, 10, 1e-2, 0.0, 6);
  ScanPoint near;
  near.position = Vec3(0.0, 0.0, 0.999);
  cloud.push_back(near);
  const auto r = plane_pca(cloud);
  EXPECT_GT(r.distances.back(), 0.0);
}

TEST(PlanePca, CropAndDegenerateInput) {
  const auto cloud = grid_on_plane(Plane{Vec3(0, 0, 1), Vec3(0, 0, -1)}, 10, 1e-2, 0.0, 7);
  EXPECT_EQ(plane_pca(cloud, CropRegion{2, 2, 6, 5}).count, 12u);
  EXPECT_THROW(plane_pca(cloud, CropRegion{0, 0, 1, 2}), DegenerateInput);
  PointCloud line;
  for (int i = 0; i < 10; ++i) line.push_back({Vec3(i * 0.01, 0, 1), 0.0, i, 0});
  EXPECT_THROW(plane_pca(line), DegenerateInput);
  EXPECT_THROW(plane_pca(PointCloud{}), DegenerateInput);
}

TEST(Histogram, EdgesAndOverflow) {
  Histogram h(-1.0, 1.0, 0.5);
  ASSERT_EQ(h.counts.size(), 4u);
  for (double v : {-2.0, -1.0, -0.5, 0.0, 0.99, 1.0, 3.0}) h.add(v);
  EXPECT_EQ(h.underflow, 1u);
  EXPECT_EQ(h.overflow, 2u);
  EXPECT_EQ(h.counts, (std::vector<std::size_t>{1, 1, 1, 1}));
  EXPECT_EQ(h.total(), 7u);
  EXPECT_THROW(Histogram(0.0, 1.0, 0.0), InvalidArgument);
}

TEST(DepthErrors, IdenticalMapsGiveZeros) {
  DepthMap m(4, 3);
  for (std::size_t i = 0; i < m.size(); ++i) {
    m.depth[i] = 0.7 + 1e-3 * static_cast<double>(i);
    m.valid[i] = i % 4 != 0;
  }
  const auto s = depth_error_stats(m, m);
  EXPECT_EQ(s.count, 9u);
  EXPECT_EQ(s.mean, 0.0);
  EXPECT_EQ(s.rms, 0.0);
  EXPECT_EQ(s.max_abs, 0.0);
  EXPECT_EQ(s.median_abs, 0.0);
  EXPECT_DOUBLE_EQ(s.valid_fraction, 0.75);
}

TEST(DepthErrors, ConstantOffset) {
  DepthMap truth(3, 3);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    truth.depth[i] = 0.75;
    truth.valid[i] = 1;
  }
  DepthMap est = truth;
  for (auto& d : est.depth) d += 1e-3;
  const auto s = depth_error_stats(est, truth);
  EXPECT_NEAR(s.mean, 1e-3, 1e-15);
  EXPECT_NEAR(s.rms, 1e-3, 1e-15);
  EXPECT_NEAR(s.median_abs, 1e-3, 1e-15);
}

TEST(DepthErrors, MismatchedSizes) {
  try {
    depth_error_stats(DepthMap(4, 4), DepthMap(4, 5));
    FAIL();
  } catch (const DimensionMismatch& e) {
    EXPECT_NE(std::string(e.what()).find("4x5"), std::string::npos);
  }
}

TEST(Comparison, DuplicateSpecGivesIdenticalRows) {
  auto rig = testsupport::small_rig(16);
  NamedPatternSpec spec{"spiral", make_pattern_spec(PatternKind::spiral, 512, 3), false};
  ComparisonOptions opt;
  opt.noise = NoiseModel::moderate(9);
  opt.scan_depth = 0.74507;
  opt.crop_margin = 2;
  const auto out = compare_patterns({spec, spec}, rig, opt);
  ASSERT_EQ(out.rows.size(), 2u);
  EXPECT_EQ(out.rows[0], out.rows[1]);
  EXPECT_TRUE(out.rows[0].error.empty());
  EXPECT_EQ(out.rows[0].points, 144u);
  EXPECT_GT(out.rows[0].sigma, 0.0);
}

TEST(Comparison, CsvHasOneRowPerPattern) {
  std::vector<PatternComparisonRow> rows(2);
  rows[0].name = "a";
  rows[1].name = "b";
  rows[1].error = "boom";
  const auto csv = comparison_csv(rows);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  EXPECT_NE(csv.find("b,nan,nan,nan,0,0,boom"), std::string::npos);
}
