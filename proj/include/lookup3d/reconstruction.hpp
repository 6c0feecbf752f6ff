#pragma once

// Depth from color: for each camera ray, the depth whose calibrated color is
// closest (L2) to the observed normalized color, found by brute force on a
// uniform depth grid.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "lookup3d/calibration.hpp"
#include "lookup3d/core.hpp"
#include "lookup3d/geometry.hpp"
#include "lookup3d/parallel.hpp"
#include "lookup3d/persistence.hpp"

namespace lookup3d {

inline constexpr double kDefaultLookupStep = 10e-6;
inline constexpr double kDefaultResidualReject = 0.05;
/// Relative squared-residual difference below which two grid depths tie.
inline constexpr double kTieTolerance = 1e-12;

struct LookupResult {
  bool valid = false;
  double depth = 0.0;
  /// L2 color distance at the returned depth.
  double residual = 0.0;
};

struct LookupOptions {
  double step = kDefaultLookupStep;
  /// Parabolic refinement around the grid minimum. Off: the result is the
  /// exact grid argmin.
  bool refine = false;
};

/// Number of grid depths begin + k * step that fit in [begin, end].
inline std::size_t lookup_grid_size(double begin, double end, double step) {
  if (!(end >= begin)) return 0;
  return static_cast<std::size_t>(std::floor((end - begin) / step + 1e-9)) + 1;
}

/// Brute-force argmin over the ray's depth grid. Ties, up to kTieTolerance,
/// go to the smaller depth.
template <typename Scalar>
LookupResult lookup_depth(const RayView<Scalar>& ray, std::span<const float> color,
                          const LookupOptions& options = {}) {
  if (!(options.step > 0.0)) throw InvalidArgument("lookup_depth: step must be > 0");
  LookupResult out;
  if (!ray.valid) return out;
  if (color.size() != static_cast<std::size_t>(ray.channels)) {
    throw DimensionMismatch("lookup_depth: color has " + std::to_string(color.size()) + " channels, ray has " +
                            std::to_string(ray.channels));
  }
  const int ch = ray.channels;
  const double begin = ray.range_begin;
  const double end = ray.range_end;
  const std::size_t count = lookup_grid_size(begin, end, options.step);
  if (count == 0) return out;

  thread_local std::vector<double> knots;
  knots.assign(ray.knots.begin(), ray.knots.end());
  const std::size_t n_coeffs = knots.size() - 4;
  const Scalar* coeffs = ray.coefficients.data();

  std::size_t span = kSplineDegree;
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_k = 0;
  double prev_err = 0.0;
  double best_prev = std::numeric_limits<double>::quiet_NaN();
  double best_next = std::numeric_limits<double>::quiet_NaN();
  bool want_next = false;
  std::array<double, 4> basis;
  for (std::size_t k = 0; k < count; ++k) {
    const double d = begin + static_cast<double>(k) * options.step;
    while (span + 1 < n_coeffs && d >= knots[span + 1]) ++span;
    cubic_basis<double>(knots, span, d, basis);
    double err = 0.0;
    const Scalar* base = coeffs + (span - kSplineDegree);
    for (int c = 0; c < ch; ++c) {
      const Scalar* cc = base + static_cast<std::size_t>(c) * n_coeffs;
      const double v = cc[0] * basis[0] + cc[1] * basis[1] + cc[2] * basis[2] + cc[3] * basis[3];
      const double diff = v - static_cast<double>(color[c]);
      err += diff * diff;
    }
    if (want_next) {
      best_next = err;
      want_next = false;
    }
    // Residuals that differ only by basis rounding count as ties.
    if (k == 0 || (err < best && best - err > kTieTolerance * best)) {
      best = err;
      best_k = k;
      best_prev = k > 0 ? prev_err : std::numeric_limits<double>::quiet_NaN();
      best_next = std::numeric_limits<double>::quiet_NaN();
      want_next = true;
    }
    prev_err = err;
  }
  out.valid = true;
  out.depth = begin + static_cast<double>(best_k) * options.step;
  out.residual = std::sqrt(best);
  if (options.refine && std::isfinite(best_prev) && std::isfinite(best_next)) {
    const double denom = best_prev - 2.0 * best + best_next;
    if (denom > 0.0) {
      const double shift = 0.5 * (best_prev - best_next) / denom;
      out.depth += std::clamp(shift, -0.5, 0.5) * options.step;
      double err = 0.0;
      for (int c = 0; c < ch; ++c) {
        const double diff = static_cast<double>(ray.evaluate(c, static_cast<Scalar>(out.depth))) - color[c];
        err += diff * diff;
      }
      out.residual = std::sqrt(err);
    }
  }
  return out;
}

struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<double> depth;
  std::vector<double> residual;
  std::vector<std::uint8_t> valid;

  DepthMap() = default;
  DepthMap(int w, int h)
      : width(w),
        height(h),
        depth(static_cast<std::size_t>(w) * h, 0.0),
        residual(static_cast<std::size_t>(w) * h, 0.0),
        valid(static_cast<std::size_t>(w) * h, 0) {}

  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  std::size_t size() const { return depth.size(); }
  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto v : valid) n += v != 0;
    return n;
  }
  friend bool operator==(const DepthMap&, const DepthMap&) = default;
};

struct ReconstructOptions {
  double step = kDefaultLookupStep;
  double residual_reject = kDefaultResidualReject;
  bool refine = false;
  int workers = 0;
};

struct ReconstructionResult {
  DepthMap depth;
  double seconds = 0.0;
  double pixels_per_second = 0.0;
};

/// Per-pixel lookup against a read-only table. Output does not depend on
/// the worker count.
template <typename Scalar>
ReconstructionResult reconstruct_frame(const BasicRayLUT<Scalar>& lut, const NormalizedStack& stack,
                                       const ReconstructOptions& options = {}) {
  if (stack.channels() != lut.channels()) {
    throw DimensionMismatch("reconstruct: lookup table has " + std::to_string(lut.channels()) +
                            " channels but the scan has " + std::to_string(stack.channels()));
  }
  if (stack.width() != lut.width() || stack.height() != lut.height()) {
    throw DimensionMismatch("reconstruct: lookup table is " + std::to_string(lut.width()) + "x" +
                            std::to_string(lut.height()) + " but the scan is " + std::to_string(stack.width()) +
                            "x" + std::to_string(stack.height()));
  }
  if (!(options.step > 0.0)) throw InvalidArgument("reconstruct: step must be > 0");
  const auto t0 = std::chrono::steady_clock::now();
  ReconstructionResult result;
  result.depth = DepthMap(lut.width(), lut.height());
  DepthMap& dm = result.depth;
  const int ch = stack.channels();
  const LookupOptions lookup{options.step, options.refine};
  parallel_for(dm.size(), options.workers, [&](std::size_t idx) {
    const int x = static_cast<int>(idx % dm.width);
    const int y = static_cast<int>(idx / dm.width);
    if (!stack.valid(x, y)) return;
    const auto ray = lut.ray(idx);
    if (!ray.valid) return;
    const std::span<const float> color(&stack.values(x, y, 0), static_cast<std::size_t>(ch));
    const auto r = lookup_depth(ray, color, lookup);
    if (!r.valid) return;
    dm.depth[idx] = r.depth;
    dm.residual[idx] = r.residual;
    dm.valid[idx] = r.residual <= options.residual_reject ? 1 : 0;
  }, 32);
  result.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  result.pixels_per_second =
      result.seconds > 0.0 ? static_cast<double>(dm.size()) / result.seconds : std::numeric_limits<double>::infinity();
  return result;
}

// ---------------------------------------------------------------- point clouds

struct ScanPoint {
  Vec3 position = Vec3::Zero();
  double residual = 0.0;
  int x = 0;
  int y = 0;
};

using PointCloud = std::vector<ScanPoint>;

/// One point per valid pixel, on the pixel's ray at the reconstructed depth.
inline PointCloud depth_to_points(const DepthMap& dm, const CameraModel& cam) {
  if (dm.width != cam.width || dm.height != cam.height) {
    throw DimensionMismatch("depth_to_points: depth map does not match the camera size");
  }
  PointCloud cloud;
  for (int y = 0; y < dm.height; ++y) {
    for (int x = 0; x < dm.width; ++x) {
      const std::size_t idx = dm.index(x, y);
      if (!dm.valid[idx]) continue;
      cloud.push_back({pixel_ray(cam, x, y).at(dm.depth[idx]), dm.residual[idx], x, y});
    }
  }
  return cloud;
}

inline std::vector<CloudPoint> to_cloud_points(const PointCloud& cloud) {
  std::vector<CloudPoint> out;
  out.reserve(cloud.size());
  for (const auto& p : cloud) {
    out.push_back({static_cast<float>(p.position.x()), static_cast<float>(p.position.y()),
                   static_cast<float>(p.position.z()), static_cast<float>(p.residual), p.x, p.y});
  }
  return out;
}

inline PointCloud from_cloud_points(const std::vector<CloudPoint>& points) {
  PointCloud out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back({Vec3(p.x, p.y, p.z), p.residual, p.px, p.py});
  return out;
}

// ---------------------------------------------------------------- temporal filter

inline constexpr double kTemporalJumpLimit = 0.01;

struct FilteredSequence {
  std::vector<DepthMap> frames;
  /// True for the first and last frame, which are passed through unfiltered.
  std::vector<bool> passthrough;
};

/// Three-frame moving average. A pixel survives only if it is valid in all
/// three frames and its depth moves by at most `jump_limit` to either
/// neighbor.
inline FilteredSequence temporal_filter(const std::vector<DepthMap>& sequence,
                                        double jump_limit = kTemporalJumpLimit) {
  if (sequence.size() < 3) throw InvalidArgument("temporal_filter: need at least 3 frames");
  for (const auto& f : sequence) {
    if (f.width != sequence.front().width || f.height != sequence.front().height) {
      throw DimensionMismatch("temporal_filter: frames differ in size");
    }
  }
  FilteredSequence out;
  out.frames = sequence;
  out.passthrough.assign(sequence.size(), false);
  out.passthrough.front() = true;
  out.passthrough.back() = true;
  for (std::size_t t = 1; t + 1 < sequence.size(); ++t) {
    const auto& prev = sequence[t - 1];
    const auto& cur = sequence[t];
    const auto& next = sequence[t + 1];
    auto& dst = out.frames[t];
    for (std::size_t i = 0; i < cur.size(); ++i) {
      const bool all_valid = prev.valid[i] && cur.valid[i] && next.valid[i];
      const double a = prev.depth[i] - cur.depth[i];
      const double b = next.depth[i] - cur.depth[i];
      if (!all_valid || std::abs(a) > jump_limit || std::abs(b) > jump_limit) {
        dst.valid[i] = 0;
        continue;
      }
      // Mean written as an offset from the center sample: an arithmetic
      // progression returns the middle depth exactly.
      dst.depth[i] = cur.depth[i] + (a + b) / 3.0;
      dst.residual[i] = (prev.residual[i] + cur.residual[i] + next.residual[i]) / 3.0;
      dst.valid[i] = 1;
    }
  }
  return out;
}

}  // namespace lookup3d
