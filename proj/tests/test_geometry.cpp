#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"

using namespace lookup3d;

TEST(Geometry, PrincipalPointRayIsOpticalAxis) {
  CameraModel cam{64, 64, 500, 500, 32, 32, 0};
  const auto r = pixel_ray(cam, 32, 32);
  EXPECT_EQ(r.direction, Vec3(0, 0, 1));
  EXPECT_EQ(r.origin, Vec3::Zero());
}

TEST(Geometry, SimilarTriangles) {
  CameraModel cam{2000, 1000, 1000, 1000, 500, 500, 0};
  const auto r = pixel_ray(cam, 1500, 500);
  EXPECT_NEAR((r.direction - Vec3(1, 0, 1).normalized()).norm(), 0.0, 1e-15);
}

TEST(Geometry, RayDirectionsAreDistinctUnitVectors) {
  CameraModel cam{4, 4, 3, 3, 1.5, 1.5, 0};
  std::vector<Vec3> dirs;
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 4; ++x) dirs.push_back(pixel_ray(cam, x, y).direction);
  }
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    EXPECT_NEAR(dirs[i].norm(), 1.0, 1e-12);
    for (std::size_t j = 0; j < i; ++j) EXPECT_GT((dirs[i] - dirs[j]).norm(), 1e-3);
  }
  CameraModel big;
  for (int y = 0; y < big.height; y += 7) {
    for (int x = 0; x < big.width; x += 5) EXPECT_NEAR(pixel_ray(big, x, y).direction.norm(), 1.0, 1e-12);
  }
}

TEST(Geometry, OutOfRangePixelRejected) {
  CameraModel cam;
  EXPECT_THROW(pixel_ray(cam, -1, 0), InvalidArgument);
  EXPECT_THROW(pixel_ray(cam, 0, cam.height), InvalidArgument);
}

TEST(Geometry, CameraValidation) {
  CameraModel cam;
  cam.fx = 0;
  EXPECT_THROW(cam.validate(), InvalidArgument);
  cam = CameraModel{};
  cam.cx = cam.width;
  EXPECT_THROW(cam.validate(), InvalidArgument);
}

TEST(Geometry, RayPlaneDepthExamples) {
  Ray r;
  EXPECT_DOUBLE_EQ(*ray_plane_depth(r, Plane{Vec3(0, 0, 2), Vec3(0, 0, -1)}), 2.0);
  r.direction = Vec3(1, 0, 1).normalized();
  EXPECT_NEAR(*ray_plane_depth(r, Plane{Vec3(0, 0, 1), Vec3(0, 0, 1)}), std::sqrt(2.0), 1e-15);
  r.direction = Vec3(1, 0, 0);
  EXPECT_FALSE(ray_plane_depth(r, Plane{Vec3(0, 0, 1), Vec3(0, 0, 1)}));
  r.direction = Vec3(0, 0, -1);
  EXPECT_FALSE(ray_plane_depth(r, Plane{Vec3(0, 0, 1), Vec3(0, 0, 1)}));
}

TEST(Geometry, RayPlaneDepthLandsOnPlane) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  int checked = 0;
  for (int i = 0; i < 2000; ++i) {
    Ray r;
    r.origin = Vec3(g(rng), g(rng), g(rng));
    r.direction = Vec3(g(rng), g(rng), g(rng)).normalized();
    Plane p{Vec3(g(rng), g(rng), g(rng)) * 2.0, Vec3(g(rng), g(rng), g(rng)).normalized()};
    const auto d = ray_plane_depth(r, p);
    if (!d) continue;
    ++checked;
    EXPECT_GE(*d, 0.0);
    EXPECT_NEAR(p.signed_distance(r.at(*d)), 0.0, 1e-10 * std::max(1.0, *d));
  }
  EXPECT_GT(checked, 500);
}

TEST(Geometry, RigidTransformAxisAngle) {
  const auto t = RigidTransform::from_axis_angle(Vec3(0, -0.3, 0.1), Vec3(0.2, 0, 0));
  EXPECT_TRUE(t.is_proper_rotation());
  EXPECT_NEAR((t.axis_angle() - Vec3(0, -0.3, 0.1)).norm(), 0.0, 1e-12);
  const Vec3 p(0.1, -0.2, 0.7);
  EXPECT_NEAR((t.apply_inverse(t.apply(p)) - p).norm(), 0.0, 1e-15);
  ProjectorModel proj;
  proj.pose.rotation(0, 0) = 2.0;
  EXPECT_THROW(proj.validate(), InvalidArgument);
}

namespace {

std::vector<BoardPose> poses_on_line(const Vec3& anchor, const Vec3& dir, int n, double step) {
  std::vector<BoardPose> out;
  for (int i = 0; i < n; ++i) {
    BoardPose p;
    p.stage_position = i * step;
    p.plane = Plane{anchor + dir * (i * step), Vec3(0, 0, -1)};
    out.push_back(p);
  }
  return out;
}

}  // namespace

TEST(Geometry, CollinearTrajectoryHasZeroResidual) {
  const Vec3 dir = Vec3(0.1, -0.05, 1).normalized();
  const auto poses = poses_on_line(Vec3(0.01, 0.02, 0.5), dir, 50, 1e-3);
  const auto line = fit_trajectory(poses);
  EXPECT_NEAR(line.residual_rms, 0.0, 1e-12);
  EXPECT_NEAR(std::abs(line.axis.dot(dir)), 1.0, 1e-12);
  EXPECT_GT(line.axis.dot(dir), 0.0);
}

TEST(Geometry, OutlierCorrectionMatchesClosedForm) {
  // n points on the z axis at 0..n-1, one shifted by delta along x.
  // With the outlier at the centroid the fitted line stays parallel to z and
  // passes through x = delta/n, so the outlier moves back by delta (1 - 1/n).
  const int n = 5;
  const double delta = 1e-3;
  auto poses = poses_on_line(Vec3::Zero(), Vec3::UnitZ(), n, 1.0);
  poses[2].plane.point.x() += delta;
  const auto line = fit_trajectory(poses);
  const auto corrected = correct_poses(poses, line);
  EXPECT_NEAR(poses[2].plane.point.x() - corrected[2].plane.point.x(), delta * (1.0 - 1.0 / n), 1e-12);
}

TEST(Geometry, NoisyTrajectoryResidual) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1e-4);
  auto poses = poses_on_line(Vec3(0, 0, 0.5), Vec3::UnitZ(), 1000, 1e-4);
  for (auto& p : poses) p.plane.point += Vec3(g(rng), g(rng), g(rng));
  const auto line = fit_trajectory(poses);
  EXPECT_NEAR(line.residual_rms, 1e-4 * std::sqrt(2.0), 0.1 * 1e-4 * std::sqrt(2.0));
}

TEST(Geometry, TrajectoryFollowsRigidMotion) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 1e-4);
  auto poses = poses_on_line(Vec3(0, 0, 0.5), Vec3(0.2, 0.1, 1).normalized(), 40, 1e-3);
  for (auto& p : poses) p.plane.point += Vec3(g(rng), g(rng), g(rng));
  const auto t = RigidTransform::from_axis_angle(Vec3(0.3, -0.2, 0.5), Vec3(0.1, -0.4, 0.2));
  auto moved = poses;
  for (auto& p : moved) p.plane.point = t.apply(p.plane.point);
  const auto a = fit_trajectory(poses);
  const auto b = fit_trajectory(moved);
  EXPECT_NEAR((t.apply(a.anchor) - b.anchor).norm(), 0.0, 1e-12);
  EXPECT_NEAR(std::abs((t.rotation * a.axis).dot(b.axis)), 1.0, 1e-12);
  EXPECT_NEAR(a.residual_rms, b.residual_rms, 1e-12);
}

TEST(Geometry, DegenerateTrajectoryRejected) {
  auto poses = poses_on_line(Vec3(0, 0, 1), Vec3::UnitZ(), 4, 0.0);
  EXPECT_THROW(fit_trajectory(poses), DegenerateInput);
  EXPECT_THROW(fit_trajectory({poses[0]}), InvalidArgument);
}

TEST(Geometry, CorrectPosesAveragesNormals) {
  auto poses = poses_on_line(Vec3(0, 0, 0.5), Vec3::UnitZ(), 3, 1e-3);
  poses[0].plane.normal = Vec3(0.01, 0, -1).normalized();
  poses[2].plane.normal = Vec3(-0.01, 0, -1).normalized();
  const auto out = correct_poses(poses, fit_trajectory(poses));
  for (const auto& p : out) EXPECT_NEAR((p.plane.normal - Vec3(0, 0, -1)).norm(), 0.0, 1e-15);
}
