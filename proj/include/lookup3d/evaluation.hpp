#pragma once

// Accuracy metrics: plane fits of reconstructed point clouds and depth-map
// error statistics against ground truth.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "lookup3d/core.hpp"
#include "lookup3d/geometry.hpp"
#include "lookup3d/persistence.hpp"
#include "lookup3d/reconstruction.hpp"

namespace lookup3d {

/// Half-open pixel rectangle [x0, x1) x [y0, y1) on the source pixels of the
/// points.
struct CropRegion {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  bool empty() const { return x1 <= x0 || y1 <= y0; }
};

/// Histogram of signed distances with explicit under/overflow counts, so that
/// underflow + sum(counts) + overflow equals the number of samples.
struct Histogram {
  double lo = 0.0;
  double bin_width = 0.0;
  std::vector<std::size_t> counts;
  std::size_t underflow = 0;
  std::size_t overflow = 0;

  Histogram() = default;
  Histogram(double lo_, double hi, double width) : lo(lo_), bin_width(width) {
    if (!(width > 0.0) || !(hi > lo_)) throw InvalidArgument("histogram: bad range or bin width");
    counts.assign(static_cast<std::size_t>(std::ceil((hi - lo_) / width - 1e-9)), 0);
  }
  double hi() const { return lo + bin_width * static_cast<double>(counts.size()); }
  double center(std::size_t i) const { return lo + (static_cast<double>(i) + 0.5) * bin_width; }
  void add(double v) {
    if (v < lo) {
      ++underflow;
    } else if (v >= hi()) {
      ++overflow;
    } else {
      const auto i = std::min(counts.size() - 1, static_cast<std::size_t>((v - lo) / bin_width));
      ++counts[i];
    }
  }
  std::size_t total() const {
    std::size_t n = underflow + overflow;
    for (auto c : counts) n += c;
    return n;
  }
  /// Two columns (bin center, count), directly plottable with gnuplot.
  std::string two_column() const {
    std::ostringstream os;
    os << "# center_m count (underflow " << underflow << ", overflow " << overflow << ")\n";
    for (std::size_t i = 0; i < counts.size(); ++i) os << format_double(center(i)) << " " << counts[i] << "\n";
    return os.str();
  }
};

inline constexpr double kHistogramHalfRange = 250e-6;
inline constexpr double kHistogramBin = 5e-6;

struct PlaneFitReport {
  Plane plane;
  /// Root mean square of the signed point-to-plane distances.
  double sigma = 0.0;
  double max_abs = 0.0;
  std::size_t count = 0;
  std::vector<double> distances;
  Histogram histogram;

  std::string summary() const {
    std::ostringstream os;
    os << "points " << count << "\n"
       << "sigma_m " << format_double(sigma) << "\n"
       << "max_abs_m " << format_double(max_abs) << "\n"
       << "plane_point " << format_double(plane.point.x()) << " " << format_double(plane.point.y()) << " "
       << format_double(plane.point.z()) << "\n"
       << "plane_normal " << format_double(plane.normal.x()) << " " << format_double(plane.normal.y()) << " "
       << format_double(plane.normal.z()) << "\n";
    return os.str();
  }
};

/// Total-least-squares plane through the (optionally cropped) points. The
/// normal is oriented toward the camera origin.
inline PlaneFitReport plane_pca(const PointCloud& cloud, const std::optional<CropRegion>& crop = std::nullopt,
                                double hist_half_range = kHistogramHalfRange, double hist_bin = kHistogramBin) {
  std::vector<Vec3> pts;
  pts.reserve(cloud.size());
  for (const auto& p : cloud) {
    if (crop && !crop->contains(p.x, p.y)) continue;
    if (!p.position.allFinite()) continue;
    pts.push_back(p.position);
  }
  if (pts.size() < 3) {
    throw DegenerateInput("plane_pca: need at least 3 points, have " + std::to_string(pts.size()));
  }
  Vec3 mean = Vec3::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : pts) {
    const Vec3 d = p - mean;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
  const auto ev = solver.eigenvalues();
  // A plane needs two spread directions; collinear points do not define one.
  if (!(ev(1) > 1e-12 * std::max(ev(2), std::numeric_limits<double>::min()))) {
    throw DegenerateInput("plane_pca: points are collinear or coincident");
  }
  PlaneFitReport out;
  out.plane.point = mean;
  out.plane.normal = solver.eigenvectors().col(0).normalized();
  if (out.plane.normal.dot(-mean) < 0.0) out.plane.normal = -out.plane.normal;
  out.count = pts.size();
  out.histogram = Histogram(-hist_half_range, hist_half_range, hist_bin);
  out.distances.reserve(pts.size());
  double ss = 0.0;
  for (const auto& p : pts) {
    const double d = out.plane.signed_distance(p);
    out.distances.push_back(d);
    out.histogram.add(d);
    ss += d * d;
    out.max_abs = std::max(out.max_abs, std::abs(d));
  }
  out.sigma = std::sqrt(ss / static_cast<double>(pts.size()));
  return out;
}

struct ErrorStats {
  std::size_t count = 0;
  double mean = 0.0;
  double rms = 0.0;
  double median_abs = 0.0;
  double max_abs = 0.0;
  /// Pixels valid in both maps over all pixels.
  double valid_fraction = 0.0;
};

/// Depth error over the pixels valid in both the estimate and the truth.
inline ErrorStats depth_error_stats(const DepthMap& estimate, const DepthMap& truth) {
  if (truth.width != estimate.width || truth.height != estimate.height) {
    throw DimensionMismatch("depth_error_stats: estimate is " + std::to_string(estimate.width) + "x" +
                            std::to_string(estimate.height) + ", truth is " + std::to_string(truth.width) + "x" +
                            std::to_string(truth.height));
  }
  std::vector<double> abs_err;
  ErrorStats s;
  double sum = 0.0;
  double ss = 0.0;
  for (std::size_t i = 0; i < estimate.size(); ++i) {
    if (!estimate.valid[i] || !truth.valid[i]) continue;
    const double e = estimate.depth[i] - truth.depth[i];
    sum += e;
    ss += e * e;
    abs_err.push_back(std::abs(e));
  }
  s.count = abs_err.size();
  s.valid_fraction = estimate.size() ? static_cast<double>(s.count) / static_cast<double>(estimate.size()) : 0.0;
  if (s.count == 0) return s;
  s.mean = sum / static_cast<double>(s.count);
  s.rms = std::sqrt(ss / static_cast<double>(s.count));
  s.max_abs = *std::max_element(abs_err.begin(), abs_err.end());
  std::sort(abs_err.begin(), abs_err.end());
  const std::size_t n = abs_err.size();
  s.median_abs = n % 2 ? abs_err[n / 2] : 0.5 * (abs_err[n / 2 - 1] + abs_err[n / 2]);
  return s;
}

inline std::string error_stats_csv(const ErrorStats& s) {
  std::ostringstream os;
  os << "count,mean_m,rms_m,median_abs_m,max_abs_m,valid_fraction\n"
     << s.count << "," << format_double(s.mean) << "," << format_double(s.rms) << "," << format_double(s.median_abs)
     << "," << format_double(s.max_abs) << "," << format_double(s.valid_fraction) << "\n";
  return os.str();
}

/// One row per pattern of a comparison run.
struct PatternComparisonRow {
  std::string name;
  double min_separation = std::numeric_limits<double>::quiet_NaN();
  double sigma = std::numeric_limits<double>::quiet_NaN();
  double depth_rms = std::numeric_limits<double>::quiet_NaN();
  std::size_t points = 0;
  std::size_t valid_rays = 0;
  std::string error;
  friend bool operator==(const PatternComparisonRow&, const PatternComparisonRow&) = default;
};

inline std::string comparison_csv(const std::vector<PatternComparisonRow>& rows) {
  auto num = [](double v) { return std::isfinite(v) ? format_double(v) : std::string("nan"); };
  std::ostringstream os;
  os << "pattern,min_separation,plane_sigma_m,depth_rms_m,points,valid_rays,error\n";
  for (const auto& r : rows) {
    os << r.name << "," << num(r.min_separation) << "," << num(r.sigma) << "," << num(r.depth_rms) << "," << r.points
       << "," << r.valid_rays << "," << r.error << "\n";
  }
  return os.str();
}

}  // namespace lookup3d
