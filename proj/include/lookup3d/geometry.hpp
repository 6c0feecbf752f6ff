#pragma once

// Camera and projector models, rays, planes and the linear-stage trajectory.
// Convention: right-handed camera frame, +z forward, +x right, +y down, image
// origin top-left. Units are meters and radians; pixels are addressed (x, y).

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include "lookup3d/core.hpp"

namespace lookup3d {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct CameraModel {
  int width = 128;
  int height = 128;
  double fx = 2000.0;
  double fy = 2000.0;
  double cx = 64.0;
  double cy = 64.0;
  /// Radial distortion coefficient; only the simulator applies it.
  double k1 = 0.0;

  void validate() const {
    if (width <= 0 || height <= 0) throw InvalidArgument("camera: size must be positive");
    if (!(fx > 0.0 && fy > 0.0)) throw InvalidArgument("camera: focal lengths must be > 0");
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
      throw InvalidArgument("camera: principal point outside the image");
    }
  }
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  friend bool operator==(const CameraModel&, const CameraModel&) = default;
};

struct Ray {
  int x = 0;
  int y = 0;
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();

  Vec3 at(double depth) const { return origin + depth * direction; }
};

/// Back-projects the ideal center of pixel (x, y). Lens distortion is not
/// undone: the lookup table absorbs it.
inline Ray pixel_ray(const CameraModel& cam, int x, int y) {
  if (!cam.contains(x, y)) {
    throw InvalidArgument("pixel_ray: pixel (" + std::to_string(x) + "," + std::to_string(y) +
                          ") outside " + std::to_string(cam.width) + "x" +
                          std::to_string(cam.height) + " image");
  }
  Ray r;
  r.x = x;
  r.y = y;
  r.direction = Vec3((x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0).normalized();
  return r;
}

/// Rotation followed by translation: p_world = rotation * p_local + translation.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform from_axis_angle(const Vec3& axis_angle, const Vec3& translation) {
    RigidTransform t;
    const double angle = axis_angle.norm();
    t.rotation = angle > 0.0 ? Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix()
                             : Mat3::Identity();
    t.translation = translation;
    return t;
  }
  Vec3 axis_angle() const {
    const Eigen::AngleAxisd aa(rotation);
    return aa.angle() * aa.axis();
  }
  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 apply_inverse(const Vec3& p) const { return rotation.transpose() * (p - translation); }
  bool is_proper_rotation(double tol = 1e-9) const {
    return (rotation.transpose() * rotation - Mat3::Identity()).norm() < tol &&
           std::abs(rotation.determinant() - 1.0) < tol;
  }
};

/// Stripe projector. The pattern coordinate of a point is its angle around
/// the projector's y axis, mapped linearly so the fov spans [0, 1].
struct ProjectorModel {
  /// Projector frame expressed in the camera frame.
  RigidTransform pose;
  double coded_axis_fov = 0.1;
  /// Standard deviation of the projector blur in pattern samples.
  double blur_sigma = 1.5;
  double response_gamma = 1.0;
  double vignetting_strength = 0.0;

  void validate() const {
    if (!pose.is_proper_rotation()) throw InvalidArgument("projector: rotation is not orthonormal");
    if (!(coded_axis_fov > 0.0)) throw InvalidArgument("projector: coded_axis_fov must be > 0");
    if (!(blur_sigma >= 0.0)) throw InvalidArgument("projector: blur_sigma must be >= 0");
    if (!(response_gamma > 0.0)) throw InvalidArgument("projector: response_gamma must be > 0");
    if (!(vignetting_strength >= 0.0 && vignetting_strength <= 1.0)) {
      throw InvalidArgument("projector: vignetting_strength must be in [0, 1]");
    }
  }

  Vec3 center() const { return pose.translation; }

  /// Pattern coordinate in [0, 1] (may fall outside when the point is not lit)
  /// and normalized off-axis radius used for vignetting.
  struct Projection {
    double pattern_t = 0.0;
    double radius = 0.0;
    bool in_front = false;
  };
  Projection project(const Vec3& point_camera) const {
    const Vec3 p = pose.apply_inverse(point_camera);
    Projection out;
    out.in_front = p.z() > 0.0;
    const double u = std::atan2(p.x(), p.z());
    const double v = std::atan2(p.y(), p.z());
    const double half = 0.5 * coded_axis_fov;
    out.pattern_t = 0.5 + u / coded_axis_fov;
    out.radius = std::sqrt(u * u + v * v) / half;
    return out;
  }
};

struct Plane {
  Vec3 point = Vec3(0, 0, 1);
  Vec3 normal = Vec3(0, 0, -1);

  double signed_distance(const Vec3& p) const { return normal.dot(p - point); }
};

struct BoardPose {
  /// Position along the stage axis, meters.
  double stage_position = 0.0;
  Plane plane;
  double albedo = 1.0;
  /// False when the board center leaves the camera frustum at this stop.
  bool in_view = true;
};

struct LinearTrajectory {
  Vec3 anchor = Vec3::Zero();
  Vec3 axis = Vec3::UnitZ();
  double residual_rms = 0.0;

  Vec3 project(const Vec3& p) const { return anchor + axis * axis.dot(p - anchor); }
};

/// Distance along the ray to the plane, or nullopt when the ray is parallel
/// to the plane or the intersection lies behind the origin.
inline std::optional<double> ray_plane_depth(const Ray& ray, const Plane& plane) {
  const double denom = ray.direction.dot(plane.normal);
  if (std::abs(denom) <= 1e-9) return std::nullopt;
  const double d = plane.normal.dot(plane.point - ray.origin) / denom;
  if (!(d >= 0.0) || !std::isfinite(d)) return std::nullopt;
  return d;
}

/// Total-least-squares line through the board reference points: the
/// principal axis of the centered point set.
inline LinearTrajectory fit_trajectory(const std::vector<BoardPose>& poses) {
  if (poses.size() < 2) throw InvalidArgument("fit_trajectory: need at least 2 poses");
  Vec3 mean = Vec3::Zero();
  for (const auto& p : poses) mean += p.plane.point;
  mean /= static_cast<double>(poses.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : poses) {
    const Vec3 d = p.plane.point - mean;
    cov += d * d.transpose();
  }
  if (cov.trace() <= 0.0) throw DegenerateInput("fit_trajectory: all board points coincide");

  Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
  LinearTrajectory line;
  line.anchor = mean;
  line.axis = solver.eigenvectors().col(2).normalized();
  // Orient along increasing stage position.
  const Vec3 span = poses.back().plane.point - poses.front().plane.point;
  if (line.axis.dot(span) < 0.0) line.axis = -line.axis;
  double ss = 0.0;
  for (const auto& p : poses) ss += (p.plane.point - line.project(p.plane.point)).squaredNorm();
  line.residual_rms = std::sqrt(ss / static_cast<double>(poses.size()));
  return line;
}

/// Snaps every board point onto the fitted line. With `average_normals` the
/// board orientation is replaced by the mean normal, since the stage only
/// translates the board.
inline std::vector<BoardPose> correct_poses(const std::vector<BoardPose>& poses,
                                            const LinearTrajectory& line,
                                            bool average_normals = true) {
  std::vector<BoardPose> out = poses;
  Vec3 mean_normal = Vec3::Zero();
  for (const auto& p : poses) mean_normal += p.plane.normal;
  const bool can_average = average_normals && mean_normal.norm() > 0.0;
  if (can_average) mean_normal.normalize();
  for (auto& p : out) {
    p.plane.point = line.project(p.plane.point);
    if (can_average) p.plane.normal = mean_normal;
  }
  return out;
}

}  // namespace lookup3d
