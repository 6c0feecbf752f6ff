#pragma once

// End-to-end flows: calibrate from a sweep, simulate scans, and measure the
// plane precision a pattern achieves on a given rig.

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "lookup3d/calibration.hpp"
#include "lookup3d/config.hpp"
#include "lookup3d/evaluation.hpp"
#include "lookup3d/geometry.hpp"
#include "lookup3d/patterns.hpp"
#include "lookup3d/reconstruction.hpp"
#include "lookup3d/simulator.hpp"

namespace lookup3d {

/// Replaces every 3-channel image by its RGGB mosaic, demosaiced again.
inline void apply_bayer(CaptureFrame& frame) {
  for (auto& img : frame.images) {
    if (img.channels() == 3) img = demosaic_bilinear(mosaic_bayer(img));
  }
}

struct CalibrationOptions {
  NormalizationOptions normalization;
  FitOptions fit;
  /// Snap reported board poses onto their fitted linear trajectory.
  bool correct_trajectory = true;
  bool bayer = false;
};

struct CalibrationResult {
  RayLUT lut;
  FitReport report;
  LinearTrajectory trajectory;
  std::vector<BoardPose> corrected_poses;
};

/// Consumes a sweep one stop at a time so frames need not stay in memory.
class Calibrator {
 public:
  Calibrator(const CameraModel& cam, const std::vector<BoardPose>& reported, CalibrationOptions options = {})
      : cam_(cam), options_(std::move(options)) {
    cam.validate();
    trajectory_ = fit_trajectory(reported);
    poses_ = options_.correct_trajectory ? correct_poses(reported, trajectory_) : reported;
    added_.assign(poses_.size(), false);
  }

  std::size_t stop_count() const { return poses_.size(); }

  void add(std::size_t stop, CaptureFrame frame) {
    if (stop >= poses_.size()) {
      throw InvalidArgument("calibrate: stop " + std::to_string(stop) + " has no board pose");
    }
    if (added_[stop]) throw InvalidArgument("calibrate: stop " + std::to_string(stop) + " added twice");
    added_[stop] = true;
    if (options_.bayer) apply_bayer(frame);
    const NormalizedStack stack = normalize_stack(frame, options_.normalization);
    if (!collector_) collector_.emplace(cam_, stack.channels());
    collector_->add_stop(stack, poses_[stop].plane);
  }

  CalibrationResult finish() && {
    for (std::size_t k = 0; k < added_.size(); ++k) {
      if (!added_[k]) throw InvalidArgument("calibrate: no frame for stop " + std::to_string(k));
    }
    if (!collector_) throw InvalidArgument("calibrate: empty sweep");
    const RaySamples samples = std::move(*collector_).finish();
    auto fit = fit_ray_splines<float>(samples, cam_, options_.fit);
    return {std::move(fit.lut), std::move(fit.report), trajectory_, std::move(poses_)};
  }

 private:
  CameraModel cam_;
  CalibrationOptions options_;
  LinearTrajectory trajectory_;
  std::vector<BoardPose> poses_;
  std::vector<bool> added_;
  std::optional<RaySampleCollector> collector_;
};

inline CalibrationResult calibrate_sweep(const SweepResult& sweep, const CameraModel& cam,
                                         const CalibrationOptions& options = {}) {
  if (sweep.frames.size() != sweep.reported.size()) {
    throw DimensionMismatch("calibrate: " + std::to_string(sweep.frames.size()) + " frames but " +
                            std::to_string(sweep.reported.size()) + " poses");
  }
  Calibrator cal(cam, sweep.reported, options);
  for (std::size_t k = 0; k < sweep.frames.size(); ++k) cal.add(k, sweep.frames[k]);
  return std::move(cal).finish();
}

/// Renders the rig's sweep and calibrates from it without keeping frames.
inline CalibrationResult simulate_calibration(const Rig& rig, std::span<const Pattern> patterns,
                                              const NoiseModel& noise, const CalibrationOptions& options = {},
                                              int workers = 0) {
  SweepOptions sweep = rig.sweep;
  sweep.workers = workers;
  const SweepPlan plan = plan_sweep(rig.camera, rig.stage, sweep);
  Calibrator cal(rig.camera, plan.reported, options);
  render_sweep(plan, rig.camera, rig.projector(), patterns, noise, sweep,
               [&](std::size_t k, CaptureFrame&& f) { cal.add(k, std::move(f)); });
  return std::move(cal).finish();
}

// ---------------------------------------------------------------- scans

/// Scan noise streams are kept apart from sweep stops with the same seed.
inline constexpr std::uint64_t kScanFrameBase = std::uint64_t{1} << 40;

inline CaptureFrame simulate_scan_frame(const Rig& rig, std::span<const Pattern> patterns, const Scene& scene,
                                        const NoiseModel& noise, std::uint64_t frame = 0, int workers = 0) {
  RenderOptions ro;
  ro.frame_index = kScanFrameBase + frame;
  ro.workers = workers;
  CaptureFrame f = render_frame(scene, rig.camera, rig.projector(), patterns, noise, ro);
  f.exposure_tag = "scan";
  return f;
}

/// Depth along each ideal pixel ray to the scene; invalid where the ray
/// misses.
inline DepthMap truth_depth(const Scene& scene, const CameraModel& cam) {
  DepthMap dm(cam.width, cam.height);
  for (int y = 0; y < cam.height; ++y) {
    for (int x = 0; x < cam.width; ++x) {
      const auto hit = intersect(scene, pixel_ray(cam, x, y));
      if (!hit) continue;
      const auto idx = dm.index(x, y);
      dm.depth[idx] = hit->depth;
      dm.valid[idx] = 1;
    }
  }
  return dm;
}

inline Scene fronto_plane(double depth, double half_extent = 0.25, double albedo = 0.9) {
  return PlaneScene{Plane{Vec3(0.0, 0.0, depth), Vec3(0.0, 0.0, -1.0)}, half_extent, albedo};
}

/// Central crop leaving `margin` pixels on every side.
inline CropRegion central_crop(const CameraModel& cam, int margin) {
  return {margin, margin, cam.width - margin, cam.height - margin};
}

struct PlaneScanOptions {
  double depth = 0.75;
  std::optional<CropRegion> crop;
  ReconstructOptions reconstruct;
  NormalizationOptions normalization;
  bool bayer = false;
  std::uint64_t frame = 0;
};

struct PlaneScanResult {
  ReconstructionResult reconstruction;
  PointCloud cloud;
  PlaneFitReport plane;
  ErrorStats errors;
};

/// Scans a fronto-parallel plane with a calibrated table and fits a plane to
/// the reconstruction.
inline PlaneScanResult scan_plane(const RayLUT& lut, const Rig& rig, std::span<const Pattern> patterns,
                                  const NoiseModel& noise, const PlaneScanOptions& options) {
  const Scene scene = fronto_plane(options.depth);
  CaptureFrame frame = simulate_scan_frame(rig, patterns, scene, noise, options.frame, options.reconstruct.workers);
  if (options.bayer) apply_bayer(frame);
  const NormalizedStack stack = normalize_stack(frame, options.normalization);
  PlaneScanResult out;
  out.reconstruction = reconstruct_frame(lut, stack, options.reconstruct);
  out.cloud = depth_to_points(out.reconstruction.depth, rig.camera);
  out.plane = plane_pca(out.cloud, options.crop);
  out.errors = depth_error_stats(out.reconstruction.depth, truth_depth(scene, rig.camera));
  return out;
}

// ---------------------------------------------------------------- pattern comparison

struct ComparisonOptions {
  NoiseModel noise;
  double scan_depth = 0.75;
  /// Pixels dropped on each side before the plane fit.
  int crop_margin = 8;
  SmoothingPolicy smoothing = SmoothingPolicy::interpolate();
  int workers = 0;
};

struct PatternComparison {
  std::vector<PatternComparisonRow> rows;
  std::vector<std::vector<Pattern>> patterns;
};

/// Calibrates and scans the same rig with each pattern under identical noise.
inline PatternComparisonRow evaluate_pattern(const NamedPatternSpec& named, const Rig& rig,
                                             const ComparisonOptions& options) {
  PatternComparisonRow row;
  row.name = named.name;
  const auto patterns = build_patterns(named);
  if (patterns.size() == 1 && patterns.front().resolution() > 2) {
    row.min_separation = min_separation(patterns.front(), 1);
  }
  try {
    CalibrationOptions cal;
    cal.fit.smoothing = options.smoothing;
    cal.fit.workers = options.workers;
    const auto calib = simulate_calibration(rig, patterns, options.noise, cal, options.workers);
    row.valid_rays = calib.lut.valid_count();
    PlaneScanOptions scan;
    scan.depth = options.scan_depth;
    scan.crop = central_crop(rig.camera, options.crop_margin);
    scan.reconstruct.workers = options.workers;
    const auto result = scan_plane(calib.lut, rig, patterns, options.noise, scan);
    row.sigma = result.plane.sigma;
    row.points = result.plane.count;
    row.depth_rms = result.errors.rms;
  } catch (const Error& e) {
    row.error = e.what();
  }
  return row;
}

inline PatternComparison compare_patterns(const std::vector<NamedPatternSpec>& specs, const Rig& rig,
                                          const ComparisonOptions& options) {
  PatternComparison out;
  for (const auto& s : specs) {
    out.rows.push_back(evaluate_pattern(s, rig, options));
    out.patterns.push_back(build_patterns(s));
  }
  return out;
}

}  // namespace lookup3d
