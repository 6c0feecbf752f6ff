#pragma once

// Calibration: white-normalized image stacks, per-ray (depth, color) samples
// collected from a board sweep, and the per-pixel cubic B-spline lookup table.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "lookup3d/bspline.hpp"
#include "lookup3d/core.hpp"
#include "lookup3d/geometry.hpp"
#include "lookup3d/parallel.hpp"
#include "lookup3d/persistence.hpp"
#include "lookup3d/simulator.hpp"

namespace lookup3d {

// ---------------------------------------------------------------- normalization

struct NormalizationOptions {
  /// Pixels whose ambient-subtracted white signal is below this are invalid.
  double white_floor = 0.02;
  double epsilon = 1e-6;
};

/// H x W x K normalized intensities with a per-pixel validity mask.
struct NormalizedStack {
  Image<float> values;
  Image<std::uint8_t> valid;

  int width() const { return values.width(); }
  int height() const { return values.height(); }
  int channels() const { return values.channels(); }
  friend bool operator==(const NormalizedStack&, const NormalizedStack&) = default;
};

/// Divides each pattern image by the white image after subtracting ambient.
/// Channel c of a pattern image is normalized by channel c of the white image
/// (channel 0 for single-channel whites). Arithmetic is done in double.
template <typename T>
NormalizedStack normalize_stack(std::span<const Image<T>> patterns, const Image<T>& white,
                                const Image<T>* ambient, const NormalizationOptions& options = {}) {
  if (white.empty()) throw InvalidArgument("normalize_stack: missing white frame");
  if (ambient && !ambient->same_shape(white)) {
    throw DimensionMismatch("normalize_stack: ambient frame shape differs from white frame");
  }
  int k_total = 0;
  for (const auto& p : patterns) {
    if (p.width() != white.width() || p.height() != white.height()) {
      throw DimensionMismatch("normalize_stack: pattern image is " + std::to_string(p.width()) + "x" +
                              std::to_string(p.height()) + ", white is " + std::to_string(white.width()) +
                              "x" + std::to_string(white.height()));
    }
    if (p.channels() > white.channels() && white.channels() != 1) {
      throw DimensionMismatch("normalize_stack: pattern has more channels than the white frame");
    }
    k_total += p.channels();
  }
  NormalizedStack out{Image<float>(white.width(), white.height(), k_total),
                      Image<std::uint8_t>(white.width(), white.height(), 1, 1)};
  for (int y = 0; y < white.height(); ++y) {
    for (int x = 0; x < white.width(); ++x) {
      bool ok = true;
      for (int c = 0; c < white.channels(); ++c) {
        const double w = static_cast<double>(white(x, y, c)) - (ambient ? static_cast<double>((*ambient)(x, y, c)) : 0.0);
        if (!(w >= options.white_floor)) ok = false;
      }
      out.valid(x, y) = ok ? 1 : 0;
      int k = 0;
      for (const auto& p : patterns) {
        for (int c = 0; c < p.channels(); ++c, ++k) {
          const int wc = white.channels() == 1 ? 0 : c;
          const double a = ambient ? static_cast<double>((*ambient)(x, y, wc)) : 0.0;
          const double num = std::max(static_cast<double>(p(x, y, c)) - a, 0.0);
          const double den = std::max(static_cast<double>(white(x, y, wc)) - a, options.epsilon);
          out.values(x, y, k) = ok ? static_cast<float>(num / den) : 0.0f;
        }
      }
    }
  }
  return out;
}

/// Normalizes every non-white, non-dark image of a capture, in capture order.
template <typename T = float>
NormalizedStack normalize_capture(const std::vector<Image<T>>& images, const std::vector<std::string>& ids,
                                  const NormalizationOptions& options = {}) {
  const Image<T>* white = nullptr;
  const Image<T>* dark = nullptr;
  std::vector<Image<T>> patterns;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] == kWhiteId) {
      white = &images[i];
    } else if (ids[i] == kDarkId) {
      dark = &images[i];
    } else {
      patterns.push_back(images[i]);
    }
  }
  if (!white) throw InvalidArgument("normalize_stack: capture has no white frame");
  return normalize_stack<T>(std::span<const Image<T>>(patterns), *white, dark, options);
}

inline NormalizedStack normalize_stack(const CaptureFrame& frame, const NormalizationOptions& options = {}) {
  return normalize_capture<float>(frame.images, frame.pattern_ids, options);
}

// ---------------------------------------------------------------- ray samples

/// Per-pixel (depth, color) measurements, sorted by depth.
struct RaySamples {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::vector<double>> depths;
  /// colors[pixel] holds depths[pixel].size() * channels values.
  std::vector<std::vector<float>> colors;

  std::size_t pixel_index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

/// Accumulates samples one sweep stop at a time.
class RaySampleCollector {
 public:
  RaySampleCollector(const CameraModel& cam, int channels) : cam_(cam), channels_(channels) {
    cam.validate();
    rays_.reserve(static_cast<std::size_t>(cam.width) * cam.height);
    for (int y = 0; y < cam.height; ++y) {
      for (int x = 0; x < cam.width; ++x) rays_.push_back(pixel_ray(cam, x, y));
    }
    samples_.width = cam.width;
    samples_.height = cam.height;
    samples_.channels = channels;
    samples_.depths.resize(rays_.size());
    samples_.colors.resize(rays_.size());
  }

  /// Adds one sample per valid pixel whose ray meets the board plane.
  void add_stop(const NormalizedStack& stack, const Plane& board) {
    if (stack.width() != cam_.width || stack.height() != cam_.height) {
      throw DimensionMismatch("collect_ray_samples: stack is " + std::to_string(stack.width()) + "x" +
                              std::to_string(stack.height()) + ", camera is " + std::to_string(cam_.width) +
                              "x" + std::to_string(cam_.height));
    }
    if (stack.channels() != channels_) {
      throw DimensionMismatch("collect_ray_samples: stack has " + std::to_string(stack.channels()) +
                              " channels, expected " + std::to_string(channels_));
    }
    for (std::size_t idx = 0; idx < rays_.size(); ++idx) {
      const int x = rays_[idx].x;
      const int y = rays_[idx].y;
      if (!stack.valid(x, y)) continue;
      const auto depth = ray_plane_depth(rays_[idx], board);
      if (!depth) continue;
      samples_.depths[idx].push_back(*depth);
      auto& col = samples_.colors[idx];
      for (int c = 0; c < channels_; ++c) col.push_back(stack.values(x, y, c));
    }
  }

  /// Sorts every ray by depth. Throws if two samples share a depth.
  RaySamples finish() && {
    for (std::size_t idx = 0; idx < samples_.depths.size(); ++idx) {
      auto& d = samples_.depths[idx];
      auto& col = samples_.colors[idx];
      std::vector<std::size_t> order(d.size());
      std::iota(order.begin(), order.end(), 0);
      if (!std::is_sorted(d.begin(), d.end())) {
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return d[a] < d[b]; });
        std::vector<double> sd(d.size());
        std::vector<float> sc(col.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
          sd[i] = d[order[i]];
          for (int c = 0; c < channels_; ++c) sc[i * channels_ + c] = col[order[i] * channels_ + c];
        }
        d = std::move(sd);
        col = std::move(sc);
      }
      for (std::size_t i = 1; i < d.size(); ++i) {
        if (!(d[i] > d[i - 1])) {
          throw DegenerateInput("collect_ray_samples: pixel (" + std::to_string(idx % samples_.width) + "," +
                                std::to_string(idx / samples_.width) + ") has repeated sample depth " +
                                format_double(d[i]));
        }
      }
    }
    return std::move(samples_);
  }

 private:
  CameraModel cam_;
  int channels_;
  std::vector<Ray> rays_;
  RaySamples samples_;
};

/// Samples from normalized stacks and trajectory-corrected board poses.
inline RaySamples collect_ray_samples(const std::vector<NormalizedStack>& stacks, const CameraModel& cam,
                                      const std::vector<BoardPose>& corrected_poses) {
  if (stacks.size() != corrected_poses.size()) {
    throw DimensionMismatch("collect_ray_samples: " + std::to_string(stacks.size()) + " stacks but " +
                            std::to_string(corrected_poses.size()) + " poses");
  }
  if (stacks.empty()) throw InvalidArgument("collect_ray_samples: empty sweep");
  RaySampleCollector collector(cam, stacks.front().channels());
  for (std::size_t k = 0; k < stacks.size(); ++k) collector.add_stop(stacks[k], corrected_poses[k].plane);
  return std::move(collector).finish();
}

// ---------------------------------------------------------------- lookup table

/// Read-only view of one camera ray of a lookup table.
template <typename Scalar>
struct RayView {
  bool valid = false;
  Scalar range_begin = 0;
  Scalar range_end = 0;
  int channels = 0;
  std::span<const Scalar> knots;
  /// channels consecutive blocks of knots.size() - 4 coefficients.
  std::span<const Scalar> coefficients;

  std::size_t coefficient_count() const { return knots.size() - 4; }
  std::span<const Scalar> channel(int c) const {
    return coefficients.subspan(static_cast<std::size_t>(c) * coefficient_count(), coefficient_count());
  }
  Scalar evaluate(int c, Scalar depth) const { return evaluate_spline<Scalar>(knots, channel(c), depth); }
};

/// Per-pixel, per-channel cubic splines of normalized intensity over depth.
/// All channels of a pixel share one knot vector.
template <typename Scalar>
class BasicRayLUT {
 public:
  BasicRayLUT() = default;
  BasicRayLUT(const CameraModel& camera, int channels)
      : camera_(camera), channels_(channels) {
    const std::size_t n = static_cast<std::size_t>(camera.width) * camera.height;
    knot_offset_.assign(n + 1, 0);
    coeff_offset_.assign(n + 1, 0);
    range_.assign(2 * n, Scalar(0));
  }

  const CameraModel& camera() const { return camera_; }
  int width() const { return camera_.width; }
  int height() const { return camera_.height; }
  int channels() const { return channels_; }
  std::size_t pixel_count() const { return knot_offset_.empty() ? 0 : knot_offset_.size() - 1; }
  double depth_min() const { return depth_min_; }
  double depth_max() const { return depth_max_; }
  void set_depth_range(double lo, double hi) {
    depth_min_ = lo;
    depth_max_ = hi;
  }

  RayView<Scalar> ray(int x, int y) const { return ray(static_cast<std::size_t>(y) * camera_.width + x); }
  RayView<Scalar> ray(std::size_t idx) const {
    RayView<Scalar> v;
    const std::size_t kb = knot_offset_[idx];
    const std::size_t ke = knot_offset_[idx + 1];
    v.valid = ke > kb;
    v.channels = channels_;
    v.range_begin = range_[2 * idx];
    v.range_end = range_[2 * idx + 1];
    if (v.valid) {
      v.knots = std::span<const Scalar>(knots_).subspan(kb, ke - kb);
      v.coefficients = std::span<const Scalar>(coeffs_).subspan(coeff_offset_[idx],
                                                                coeff_offset_[idx + 1] - coeff_offset_[idx]);
    }
    return v;
  }
  bool valid(int x, int y) const { return ray(x, y).valid; }
  std::size_t valid_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < pixel_count(); ++i) n += knot_offset_[i + 1] > knot_offset_[i];
    return n;
  }

  /// Appends the next pixel in row-major order. Empty knots mark it invalid.
  void push_pixel(std::span<const Scalar> knots, std::span<const Scalar> coeffs, Scalar range_begin,
                  Scalar range_end) {
    const std::size_t idx = next_pixel_;
    if (idx >= pixel_count()) throw InvalidArgument("RayLUT: too many pixels");
    if (!knots.empty()) {
      if (knots.size() < 8) throw InvalidArgument("RayLUT: a cubic spline needs at least 8 knots");
      if (coeffs.size() != static_cast<std::size_t>(channels_) * (knots.size() - 4)) {
        throw DimensionMismatch("RayLUT: coefficient count does not match knots and channels");
      }
      for (std::size_t i = 1; i < knots.size(); ++i) {
        if (knots[i] < knots[i - 1]) throw InvalidArgument("RayLUT: knots must be nondecreasing");
      }
    }
    knots_.insert(knots_.end(), knots.begin(), knots.end());
    coeffs_.insert(coeffs_.end(), coeffs.begin(), coeffs.end());
    knot_offset_[idx + 1] = knots_.size();
    coeff_offset_[idx + 1] = coeffs_.size();
    range_[2 * idx] = range_begin;
    range_[2 * idx + 1] = range_end;
    ++next_pixel_;
  }

  friend bool operator==(const BasicRayLUT&, const BasicRayLUT&) = default;

 private:
  CameraModel camera_;
  int channels_ = 0;
  double depth_min_ = 0.0;
  double depth_max_ = 0.0;
  std::size_t next_pixel_ = 0;
  std::vector<std::size_t> knot_offset_;
  std::vector<std::size_t> coeff_offset_;
  std::vector<Scalar> range_;
  std::vector<Scalar> knots_;
  std::vector<Scalar> coeffs_;
};

/// The stored lookup table precision.
using RayLUT = BasicRayLUT<float>;

// ---------------------------------------------------------------- spline fitting

struct SmoothingPolicy {
  enum class Mode { fixed, automatic };
  Mode mode = Mode::fixed;
  /// Residual target (fixed) or multiplier of n * sigma^2 (automatic).
  double value = 0.0;

  static SmoothingPolicy interpolate() { return {}; }
  static SmoothingPolicy fixed(double s) { return {Mode::fixed, s}; }
  /// Residual target n * sigma^2 per channel, sigma estimated from the
  /// samples' second differences.
  static SmoothingPolicy automatic(double factor = 1.0) { return {Mode::automatic, factor}; }
};

struct FitOptions {
  SmoothingPolicy smoothing;
  /// Optional clip applied to every pixel's depth range.
  double clip_begin = -std::numeric_limits<double>::infinity();
  double clip_end = std::numeric_limits<double>::infinity();
  int workers = 0;
};

struct PixelFitRecord {
  int x = 0;
  int y = 0;
  std::size_t samples = 0;
  /// Root mean square residual over all channels and samples.
  double residual_rms = 0.0;
  bool valid = false;
};

struct FitReport {
  std::vector<PixelFitRecord> pixels;

  std::size_t valid_count() const {
    return static_cast<std::size_t>(std::count_if(pixels.begin(), pixels.end(), [](const auto& p) { return p.valid; }));
  }
  std::string csv() const {
    std::ostringstream os;
    os << "x,y,samples,residual_rms,valid\n";
    for (const auto& p : pixels) {
      os << p.x << "," << p.y << "," << p.samples << "," << format_double(p.residual_rms) << ","
         << (p.valid ? 1 : 0) << "\n";
    }
    return os.str();
  }
};

template <typename Scalar>
struct FitResult {
  BasicRayLUT<Scalar> lut;
  FitReport report;
};

/// Fits an independent cubic spline per pixel and channel. Pixels with fewer
/// than four samples (or an empty range after clipping) are invalid.
template <typename Scalar = float>
FitResult<Scalar> fit_ray_splines(const RaySamples& samples, const CameraModel& cam,
                                  const FitOptions& options = {}) {
  if (samples.width != cam.width || samples.height != cam.height) {
    throw DimensionMismatch("fit_ray_splines: samples do not match the camera size");
  }
  const int ch = samples.channels;
  const std::size_t n_pix = static_cast<std::size_t>(cam.width) * cam.height;

  struct PixelFit {
    std::vector<Scalar> knots;
    std::vector<Scalar> coeffs;
    Scalar begin = 0;
    Scalar end = 0;
  };
  std::vector<PixelFit> fits(n_pix);
  FitReport report;
  report.pixels.resize(n_pix);

  parallel_for(n_pix, options.workers, [&](std::size_t idx) {
    auto& rec = report.pixels[idx];
    rec.x = static_cast<int>(idx % cam.width);
    rec.y = static_cast<int>(idx / cam.width);
    const auto& d = samples.depths[idx];
    const auto& col = samples.colors[idx];
    rec.samples = d.size();
    if (d.size() < 4) return;
    const double begin = std::max(d.front(), options.clip_begin);
    const double end = std::min(d.back(), options.clip_end);
    if (!(end > begin)) return;

    SplineFitter fitter(d);
    const std::size_t n = d.size();
    std::vector<std::vector<double>> channel_values(ch, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      for (int c = 0; c < ch; ++c) channel_values[c][i] = col[i * ch + c];
    }
    std::vector<std::vector<double>> coeffs;
    double ss = 0.0;
    if (options.smoothing.mode == SmoothingPolicy::Mode::fixed && options.smoothing.value == 0.0) {
      std::vector<std::span<const double>> views(channel_values.begin(), channel_values.end());
      coeffs = fitter.interpolate(views);
      for (int c = 0; c < ch; ++c) ss += fitter.residual(channel_values[c], coeffs[c]);
    } else {
      for (int c = 0; c < ch; ++c) {
        double target = options.smoothing.value;
        if (options.smoothing.mode == SmoothingPolicy::Mode::automatic) {
          target = options.smoothing.value * static_cast<double>(n) * estimate_noise_variance(channel_values[c]);
        }
        double achieved = 0.0;
        coeffs.push_back(fitter.smooth(channel_values[c], target, &achieved));
        ss += achieved;
      }
    }
    auto& fit = fits[idx];
    fit.knots.assign(fitter.knots().begin(), fitter.knots().end());
    for (const auto& c : coeffs) {
      for (double v : c) fit.coeffs.push_back(static_cast<Scalar>(v));
    }
    fit.begin = static_cast<Scalar>(begin);
    fit.end = static_cast<Scalar>(end);
    rec.valid = true;
    rec.residual_rms = std::sqrt(ss / static_cast<double>(n * ch));
  }, 16);

  FitResult<Scalar> result{BasicRayLUT<Scalar>(cam, ch), std::move(report)};
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (auto& f : fits) {
    if (!f.knots.empty()) {
      lo = std::min(lo, static_cast<double>(f.begin));
      hi = std::max(hi, static_cast<double>(f.end));
    }
    result.lut.push_pixel(f.knots, f.coeffs, f.begin, f.end);
    f = PixelFit{};
  }
  if (lo <= hi) result.lut.set_depth_range(lo, hi);
  return result;
}

// ---------------------------------------------------------------- LUT file
//
// Layout (little-endian):
//   char[8]   magic "LU3DLUT\0"
//   uint32    version (1)
//   uint32    width, height, channels
//   float64   fx, fy, cx, cy, k1
//   float64   depth_min, depth_max
//   then for each pixel in row-major order:
//     uint32  knot_count m (0 for an invalid pixel)
//     float32 range_begin, range_end
//     float32 knots[m]
//     float32 coefficients[channels * (m - 4)]   (channel-major)
// File size = 80 + sum over pixels of (12 + 4 * (m + channels * (m - 4))).

inline constexpr std::size_t kLutHeaderBytes = 80;

inline std::string encode_lut(const RayLUT& lut) {
  std::string out(kLutMagic);
  detail::put<std::uint32_t>(out, kLutVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(lut.width()));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(lut.height()));
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(lut.channels()));
  const auto& cam = lut.camera();
  for (double v : {cam.fx, cam.fy, cam.cx, cam.cy, cam.k1, lut.depth_min(), lut.depth_max()}) {
    detail::put<double>(out, v);
  }
  for (std::size_t idx = 0; idx < lut.pixel_count(); ++idx) {
    const auto ray = lut.ray(idx);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(ray.knots.size()));
    detail::put<float>(out, ray.range_begin);
    detail::put<float>(out, ray.range_end);
    out.append(reinterpret_cast<const char*>(ray.knots.data()), ray.knots.size_bytes());
    out.append(reinterpret_cast<const char*>(ray.coefficients.data()), ray.coefficients.size_bytes());
  }
  return out;
}

inline RayLUT decode_lut(std::string_view bytes, const std::string& what = "lut") {
  detail::ByteReader r(bytes, what);
  if (r.take(kLutMagic.size()) != kLutMagic) throw FormatError(what + ": not a lookup table (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kLutVersion) {
    throw FormatError(what + ": unsupported lookup table version " + std::to_string(version) + " (expected " +
                      std::to_string(kLutVersion) + ")");
  }
  CameraModel cam;
  cam.width = static_cast<int>(r.get<std::uint32_t>());
  cam.height = static_cast<int>(r.get<std::uint32_t>());
  const int channels = static_cast<int>(r.get<std::uint32_t>());
  cam.fx = r.get<double>();
  cam.fy = r.get<double>();
  cam.cx = r.get<double>();
  cam.cy = r.get<double>();
  cam.k1 = r.get<double>();
  const double dmin = r.get<double>();
  const double dmax = r.get<double>();
  if (cam.width <= 0 || cam.height <= 0 || channels <= 0 || channels > 4096) {
    throw FormatError(what + ": corrupt header dimensions");
  }
  RayLUT lut(cam, channels);
  lut.set_depth_range(dmin, dmax);
  std::vector<float> knots;
  std::vector<float> coeffs;
  const std::size_t n = static_cast<std::size_t>(cam.width) * cam.height;
  for (std::size_t idx = 0; idx < n; ++idx) {
    const auto m = r.get<std::uint32_t>();
    const float begin = r.get<float>();
    const float end = r.get<float>();
    if (m != 0 && m < 8) throw FormatError(what + ": pixel " + std::to_string(idx) + " has " + std::to_string(m) + " knots");
    if (m > r.remaining() / 4) throw FormatError(what + ": truncated file at pixel " + std::to_string(idx));
    knots.resize(m);
    r.read_into(knots.data(), m);
    coeffs.resize(m == 0 ? 0 : static_cast<std::size_t>(channels) * (m - 4));
    r.read_into(coeffs.data(), coeffs.size());
    try {
      lut.push_pixel(knots, coeffs, begin, end);
    } catch (const InvalidArgument& e) {
      throw FormatError(what + ": pixel " + std::to_string(idx) + ": " + e.what());
    }
  }
  if (r.remaining() != 0) {
    throw FormatError(what + ": " + std::to_string(r.remaining()) + " unexpected trailing bytes");
  }
  return lut;
}

inline void save_lut(const RayLUT& lut, const std::filesystem::path& path) { write_file(path, encode_lut(lut)); }
inline RayLUT load_lut(const std::filesystem::path& path) { return decode_lut(read_file(path), path.string()); }

}  // namespace lookup3d
