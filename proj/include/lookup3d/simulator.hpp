#pragma once

// Synthetic camera/projector rig. Renders raw captures of planar boards and
// test objects under projected patterns, with Lambertian shading, projector
// blur, response and vignetting, camera radial distortion and sensor noise.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "lookup3d/core.hpp"
#include "lookup3d/geometry.hpp"
#include "lookup3d/parallel.hpp"
#include "lookup3d/patterns.hpp"

namespace lookup3d {

// ---------------------------------------------------------------- scenes

/// Square calibration board; `half_extent` measured in the board plane.
struct BoardScene {
  BoardPose pose;
  double half_extent = 0.25;
};

/// Finite square plane.
struct PlaneScene {
  Plane plane;
  double half_extent = 0.25;
  double albedo = 1.0;
};

/// z = depth(x, y) sampled on a regular grid over [x0, x1] x [y0, y1] with
/// bilinear interpolation; albedo is sampled on the same grid.
struct HeightfieldScene {
  double x0 = -0.05, x1 = 0.05, y0 = -0.05, y1 = 0.05;
  int nx = 2, ny = 2;
  std::vector<double> depth;
  std::vector<double> albedo;
};

struct SphereScene {
  Vec3 center = Vec3(0, 0, 0.55);
  double radius = 0.02;
  double albedo = 1.0;
};

using Scene = std::variant<BoardScene, PlaneScene, HeightfieldScene, SphereScene>;

struct SurfaceHit {
  double depth = 0.0;
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  double albedo = 1.0;
};

namespace detail {

inline std::optional<SurfaceHit> hit_square(const Ray& ray, const Plane& plane, double half_extent,
                                            double albedo) {
  const auto d = ray_plane_depth(ray, plane);
  if (!d) return std::nullopt;
  const Vec3 p = ray.at(*d);
  // In-plane axes: project the camera x axis (or y if degenerate) onto the plane.
  Vec3 u = Vec3::UnitX() - plane.normal * plane.normal.x();
  if (u.norm() < 1e-6) u = Vec3::UnitY() - plane.normal * plane.normal.y();
  u.normalize();
  const Vec3 v = plane.normal.cross(u);
  const Vec3 rel = p - plane.point;
  if (std::abs(rel.dot(u)) > half_extent || std::abs(rel.dot(v)) > half_extent) return std::nullopt;
  return SurfaceHit{*d, p, plane.normal, albedo};
}

inline double bilinear(const HeightfieldScene& h, const std::vector<double>& grid, double x, double y) {
  const double gx = (x - h.x0) / (h.x1 - h.x0) * (h.nx - 1);
  const double gy = (y - h.y0) / (h.y1 - h.y0) * (h.ny - 1);
  const int ix = std::clamp(static_cast<int>(std::floor(gx)), 0, h.nx - 2);
  const int iy = std::clamp(static_cast<int>(std::floor(gy)), 0, h.ny - 2);
  const double fx = gx - ix;
  const double fy = gy - iy;
  auto at = [&](int a, int b) { return grid[static_cast<std::size_t>(b) * h.nx + a]; };
  return (1 - fx) * (1 - fy) * at(ix, iy) + fx * (1 - fy) * at(ix + 1, iy) +
         (1 - fx) * fy * at(ix, iy + 1) + fx * fy * at(ix + 1, iy + 1);
}

inline std::optional<SurfaceHit> hit_heightfield(const Ray& ray, const HeightfieldScene& h) {
  if (h.nx < 2 || h.ny < 2 || h.depth.size() != static_cast<std::size_t>(h.nx) * h.ny) {
    throw InvalidArgument("heightfield: grid size does not match nx * ny");
  }
  const auto [zmin_it, zmax_it] = std::minmax_element(h.depth.begin(), h.depth.end());
  const double zmin = *zmin_it;
  const double zmax = *zmax_it;
  auto inside = [&](const Vec3& p) {
    return p.x() >= h.x0 && p.x() <= h.x1 && p.y() >= h.y0 && p.y() <= h.y1;
  };
  auto gap = [&](double d) {
    const Vec3 p = ray.at(d);
    return p.z() - bilinear(h, h.depth, p.x(), p.y());
  };
  // March from the top of the relief to its bottom in small steps, then bisect.
  const double dz = ray.direction.z();
  if (dz <= 0.0) return std::nullopt;
  const double d_begin = zmin / dz;
  const double d_end = zmax / dz;
  const double cell = std::min((h.x1 - h.x0) / (h.nx - 1), (h.y1 - h.y0) / (h.ny - 1));
  const double step = std::max(cell * 0.25, 1e-6);
  double prev = d_begin;
  double gprev = gap(prev);
  if (gprev >= 0.0) {
    if (!inside(ray.at(prev))) return std::nullopt;
  } else {
    for (double d = d_begin + step;; d += step) {
      const double cur = std::min(d, d_end);
      const double g = gap(cur);
      if (g >= 0.0) {
        double lo = prev;
        double hi = cur;
        for (int i = 0; i < 60; ++i) {
          const double mid = 0.5 * (lo + hi);
          (gap(mid) >= 0.0 ? hi : lo) = mid;
        }
        prev = hi;
        break;
      }
      prev = cur;
      if (cur >= d_end) return std::nullopt;
    }
  }
  const Vec3 p = ray.at(prev);
  if (!inside(p)) return std::nullopt;
  const double e = 1e-5;
  const double hx = (bilinear(h, h.depth, p.x() + e, p.y()) - bilinear(h, h.depth, p.x() - e, p.y())) / (2 * e);
  const double hy = (bilinear(h, h.depth, p.x(), p.y() + e) - bilinear(h, h.depth, p.x(), p.y() - e)) / (2 * e);
  Vec3 n(hx, hy, -1.0);
  n.normalize();
  const double albedo = h.albedo.empty() ? 1.0 : bilinear(h, h.albedo, p.x(), p.y());
  return SurfaceHit{prev, p, n, albedo};
}

inline std::optional<SurfaceHit> hit_sphere(const Ray& ray, const SphereScene& s) {
  const Vec3 oc = ray.origin - s.center;
  const double b = oc.dot(ray.direction);
  const double c = oc.squaredNorm() - s.radius * s.radius;
  const double disc = b * b - c;
  if (disc < 0.0) return std::nullopt;
  const double sq = std::sqrt(disc);
  double d = -b - sq;
  if (d < 0.0) d = -b + sq;
  if (d < 0.0) return std::nullopt;
  const Vec3 p = ray.at(d);
  return SurfaceHit{d, p, (p - s.center).normalized(), s.albedo};
}

}  // namespace detail

/// Nearest visible surface along the ray.
inline std::optional<SurfaceHit> intersect(const Scene& scene, const Ray& ray) {
  return std::visit(
      [&](const auto& s) -> std::optional<SurfaceHit> {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, BoardScene>) {
          return detail::hit_square(ray, s.pose.plane, s.half_extent, s.pose.albedo);
        } else if constexpr (std::is_same_v<S, PlaneScene>) {
          return detail::hit_square(ray, s.plane, s.half_extent, s.albedo);
        } else if constexpr (std::is_same_v<S, HeightfieldScene>) {
          return detail::hit_heightfield(ray, s);
        } else {
          return detail::hit_sphere(ray, s);
        }
      },
      scene);
}

// ---------------------------------------------------------------- noise

struct NoiseModel {
  double read_noise_sigma = 0.0;
  double shot_noise_scale = 0.0;
  double ambient_level = 0.0;
  /// Noise multiplier per color channel; green sees two Bayer samples.
  std::array<double, 3> channel_gains{1.0, 1.0, 1.0};
  std::uint64_t seed = 0;

  bool noiseless() const { return read_noise_sigma == 0.0 && shot_noise_scale == 0.0; }
  void validate() const {
    if (!(read_noise_sigma >= 0.0 && shot_noise_scale >= 0.0 && ambient_level >= 0.0)) {
      throw InvalidArgument("noise model: parameters must be nonnegative");
    }
    for (double g : channel_gains) {
      if (!(g >= 0.0)) throw InvalidArgument("noise model: channel gains must be nonnegative");
    }
  }

  /// Read noise 0.5% of full scale, mild shot noise, lower noise on green.
  static NoiseModel moderate(std::uint64_t seed = 0) {
    NoiseModel n;
    n.read_noise_sigma = 0.005;
    n.shot_noise_scale = 0.005;
    n.channel_gains = {1.0, 1.0 / std::numbers::sqrt2, 1.0};
    n.seed = seed;
    return n;
  }
};

// ---------------------------------------------------------------- capture

/// Raw images captured at one rig state, one image per projected pattern.
struct CaptureFrame {
  std::vector<Image<float>> images;
  std::vector<std::string> pattern_ids;
  std::string exposure_tag = "default";

  const Image<float>& image(const std::string& id) const {
    for (std::size_t i = 0; i < pattern_ids.size(); ++i) {
      if (pattern_ids[i] == id) return images[i];
    }
    throw InvalidArgument("capture frame has no image for pattern '" + id + "'");
  }
  bool has(const std::string& id) const {
    return std::find(pattern_ids.begin(), pattern_ids.end(), id) != pattern_ids.end();
  }
  friend bool operator==(const CaptureFrame&, const CaptureFrame&) = default;
};

inline constexpr const char* kWhiteId = "white";
inline constexpr const char* kDarkId = "dark";

/// A pattern prepared for projection: blurred in pattern space, ready for
/// linear-interpolated lookup. Positions outside [0, 1] are unlit.
class ProjectedPattern {
 public:
  ProjectedPattern(const Pattern& pattern, double blur_sigma)
      : n_(pattern.resolution()), ch_(pattern.channels()), values_(pattern.values) {
    if (blur_sigma > 0.0) {
      const int radius = static_cast<int>(std::ceil(4.0 * blur_sigma));
      std::vector<double> kernel(2 * radius + 1);
      double sum = 0.0;
      for (int k = -radius; k <= radius; ++k) {
        kernel[k + radius] = std::exp(-0.5 * (k * k) / (blur_sigma * blur_sigma));
        sum += kernel[k + radius];
      }
      for (auto& k : kernel) k /= sum;
      std::vector<double> out(values_.size(), 0.0);
      for (int i = 0; i < n_; ++i) {
        for (int k = -radius; k <= radius; ++k) {
          const int j = std::clamp(i + k, 0, n_ - 1);
          for (int c = 0; c < ch_; ++c) {
            out[static_cast<std::size_t>(i) * ch_ + c] +=
                kernel[k + radius] * values_[static_cast<std::size_t>(j) * ch_ + c];
          }
        }
      }
      values_ = std::move(out);
    }
  }

  int channels() const { return ch_; }

  double sample(double t, int channel) const {
    if (!(t >= 0.0 && t <= 1.0)) return 0.0;
    const double pos = t * (n_ - 1);
    const int i = std::min(static_cast<int>(pos), n_ - 2);
    const double f = pos - i;
    const double a = values_[static_cast<std::size_t>(i) * ch_ + channel];
    const double b = values_[static_cast<std::size_t>(i + 1) * ch_ + channel];
    return a + f * (b - a);
  }

 private:
  int n_;
  int ch_;
  std::vector<double> values_;
};

/// Per-pixel rig geometry for one scene: what each pixel sees and where that
/// point falls in the projector.
struct PixelIllumination {
  bool lit = false;
  double pattern_t = 0.0;
  /// albedo * cosine * vignetting
  double shade = 0.0;
  double depth = 0.0;
};

/// Direction of the ray actually imaged by pixel (x, y), including the
/// camera's radial distortion.
inline Ray distorted_pixel_ray(const CameraModel& cam, int x, int y) {
  if (cam.k1 == 0.0) return pixel_ray(cam, x, y);
  Ray r;
  r.x = x;
  r.y = y;
  const double xn = (x - cam.cx) / cam.fx;
  const double yn = (y - cam.cy) / cam.fy;
  const double scale = 1.0 + cam.k1 * (xn * xn + yn * yn);
  r.direction = Vec3(xn * scale, yn * scale, 1.0).normalized();
  return r;
}

inline std::vector<PixelIllumination> illuminate(const Scene& scene, const CameraModel& cam,
                                                 const ProjectorModel& proj, int workers = 0) {
  cam.validate();
  proj.validate();
  std::vector<PixelIllumination> out(static_cast<std::size_t>(cam.width) * cam.height);
  parallel_for(out.size(), workers, [&](std::size_t idx) {
    const int x = static_cast<int>(idx % cam.width);
    const int y = static_cast<int>(idx / cam.width);
    const Ray ray = distorted_pixel_ray(cam, x, y);
    const auto hit = intersect(scene, ray);
    if (!hit) return;
    const auto projection = proj.project(hit->point);
    if (!projection.in_front) return;
    Vec3 normal = hit->normal;
    if (normal.dot(-ray.direction) < 0.0) normal = -normal;
    const Vec3 to_projector = (proj.center() - hit->point).normalized();
    const double cosine = normal.dot(to_projector);
    if (cosine <= 0.0) return;
    const double vignetting =
        std::max(0.0, 1.0 - proj.vignetting_strength * projection.radius * projection.radius);
    PixelIllumination& p = out[idx];
    p.lit = true;
    p.pattern_t = projection.pattern_t;
    p.shade = hit->albedo * cosine * vignetting;
    p.depth = hit->depth;
  });
  return out;
}

namespace detail {

inline double standard_normal(std::mt19937_64& rng) {
  // Box-Muller on portable uniforms.
  double u1 = unit_uniform(rng);
  while (u1 <= 0.0) u1 = unit_uniform(rng);
  const double u2 = unit_uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

inline std::mt19937_64 noise_stream(std::uint64_t seed, std::uint64_t frame, std::uint64_t image) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(frame), static_cast<std::uint32_t>(frame >> 32),
                    static_cast<std::uint32_t>(image)};
  return std::mt19937_64(seq);
}

}  // namespace detail

/// Image of one projected pattern given precomputed illumination. A null
/// pattern renders the projector switched off (ambient only).
inline Image<float> render_image(const std::vector<PixelIllumination>& light, const CameraModel& cam,
                                 const ProjectorModel& proj, const ProjectedPattern* pattern,
                                 int channels, const NoiseModel& noise, std::uint64_t frame_index,
                                 std::uint64_t image_index) {
  Image<float> img(cam.width, cam.height, channels);
  std::vector<double> clean(img.size());
  for (std::size_t idx = 0; idx < light.size(); ++idx) {
    const auto& p = light[idx];
    for (int c = 0; c < channels; ++c) {
      double v = noise.ambient_level;
      if (pattern && p.lit) {
        const double s = pattern->sample(p.pattern_t, pattern->channels() == 1 ? 0 : c);
        const double response = proj.response_gamma == 1.0 ? s : std::pow(s, proj.response_gamma);
        v += p.shade * response;
      }
      clean[idx * channels + c] = v;
    }
  }
  if (noise.noiseless()) {
    for (std::size_t i = 0; i < clean.size(); ++i) img.values()[i] = static_cast<float>(clean[i]);
    return img;
  }
  auto rng = detail::noise_stream(noise.seed, frame_index, image_index);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const int c = static_cast<int>(i % channels);
    const double gain = noise.channel_gains[std::min(c, 2)];
    const double v = clean[i];
    const double sigma = gain * std::sqrt(noise.read_noise_sigma * noise.read_noise_sigma +
                                          noise.shot_noise_scale * noise.shot_noise_scale * std::max(v, 0.0));
    img.values()[i] = static_cast<float>(std::max(0.0, v + sigma * detail::standard_normal(rng)));
  }
  return img;
}

struct RenderOptions {
  /// Append a full-white image ("white") and a projector-off image ("dark").
  bool add_white = true;
  bool add_dark = true;
  std::uint64_t frame_index = 0;
  int workers = 0;
};

/// Channel count of the camera images for a pattern set.
inline int capture_channels(std::span<const Pattern> patterns) {
  int ch = 1;
  for (const auto& p : patterns) ch = std::max(ch, p.channels());
  return ch;
}

/// Stable identifier of pattern i in a capture, e.g. "p0".
inline std::string pattern_id(std::size_t i) { return "p" + std::to_string(i); }

/// Renders one capture: an image per pattern, plus white and dark frames.
inline CaptureFrame render_frame(const Scene& scene, const CameraModel& cam, const ProjectorModel& proj,
                                 std::span<const Pattern> patterns, const NoiseModel& noise,
                                 const RenderOptions& options = {}) {
  noise.validate();
  for (const auto& p : patterns) {
    if (p.channels() > 3) throw InvalidArgument("render_frame: pattern has more than 3 channels");
  }
  const auto light = illuminate(scene, cam, proj, options.workers);
  const int white_channels = capture_channels(patterns);
  CaptureFrame frame;
  std::uint64_t image_index = 0;
  for (std::size_t i = 0; i < patterns.size(); ++i) {
    const ProjectedPattern projected(patterns[i], proj.blur_sigma);
    frame.images.push_back(render_image(light, cam, proj, &projected, patterns[i].channels(), noise,
                                        options.frame_index, image_index++));
    frame.pattern_ids.push_back(pattern_id(i));
  }
  if (options.add_white) {
    const Pattern white = gen_pattern(make_pattern_spec(PatternKind::white, 2, white_channels));
    const ProjectedPattern projected(white, 0.0);
    frame.images.push_back(
        render_image(light, cam, proj, &projected, white_channels, noise, options.frame_index, image_index++));
    frame.pattern_ids.push_back(kWhiteId);
  }
  if (options.add_dark) {
    frame.images.push_back(
        render_image(light, cam, proj, nullptr, white_channels, noise, options.frame_index, image_index++));
    frame.pattern_ids.push_back(kDarkId);
  }
  return frame;
}

inline CaptureFrame render_frame(const Scene& scene, const CameraModel& cam, const ProjectorModel& proj,
                                 const Pattern& pattern, const NoiseModel& noise,
                                 const RenderOptions& options = {}) {
  return render_frame(scene, cam, proj, std::span<const Pattern>(&pattern, 1), noise, options);
}

// ---------------------------------------------------------------- sweeps

struct StageRange {
  double start = 0.725;
  double end = 0.775;
  double step = 150e-6;

  void validate() const {
    if (!(start < end)) throw InvalidArgument("stage range: start must be < end");
    if (!(step > 0.0)) throw InvalidArgument("stage range: step must be > 0");
  }
  std::size_t stop_count() const {
    validate();
    return static_cast<std::size_t>(std::floor((end - start) / step + 1e-9)) + 1;
  }
  double position(std::size_t k) const { return start + static_cast<double>(k) * step; }
};

struct SweepOptions {
  /// Direction the stage moves the board, in camera coordinates.
  Vec3 stage_axis = Vec3::UnitZ();
  /// Board point at stage position 0 is stage_origin; at s it is
  /// stage_origin + s * stage_axis.
  Vec3 stage_origin = Vec3::Zero();
  /// Board normal (pointing at the camera).
  Vec3 board_normal = Vec3(0, 0, -1);
  double board_half_extent = 0.25;
  double board_albedo = 0.9;
  /// Uniform per-axis bound on reported translation error, meters.
  double pose_translation_noise = 0.0;
  /// Bound on the reported rotation error, degrees.
  double pose_rotation_noise_deg = 0.0;
  std::uint64_t pose_seed = 0;
  int workers = 0;
};

/// Ground-truth and reported board poses for every stop.
struct SweepPlan {
  StageRange range;
  std::vector<BoardPose> truth;
  std::vector<BoardPose> reported;
};

inline SweepPlan plan_sweep(const CameraModel& cam, const StageRange& range, const SweepOptions& options) {
  range.validate();
  SweepPlan plan;
  plan.range = range;
  const std::size_t n = range.stop_count();
  const Vec3 axis = options.stage_axis.normalized();
  const Vec3 normal = options.board_normal.normalized();
  std::mt19937_64 rng(options.pose_seed ^ 0x9e3779b97f4a7c15ull);
  auto uniform = [&] { return 2.0 * detail::unit_uniform(rng) - 1.0; };
  for (std::size_t k = 0; k < n; ++k) {
    BoardPose truth;
    truth.stage_position = range.position(k);
    truth.plane.point = options.stage_origin + truth.stage_position * axis;
    truth.plane.normal = normal;
    truth.albedo = options.board_albedo;
    const Vec3 c = truth.plane.point;
    truth.in_view = c.z() > 0.0 && cam.contains(static_cast<int>(std::floor(cam.fx * c.x() / c.z() + cam.cx + 0.5)),
                                                static_cast<int>(std::floor(cam.fy * c.y() / c.z() + cam.cy + 0.5)));
    BoardPose reported = truth;
    if (options.pose_translation_noise > 0.0) {
      reported.plane.point += options.pose_translation_noise * Vec3(uniform(), uniform(), uniform());
    }
    if (options.pose_rotation_noise_deg > 0.0) {
      Vec3 axis_r(uniform(), uniform(), uniform());
      if (axis_r.norm() < 1e-12) axis_r = Vec3::UnitX();
      const double angle = uniform() * options.pose_rotation_noise_deg * std::numbers::pi / 180.0;
      reported.plane.normal = Eigen::AngleAxisd(angle, axis_r.normalized()) * reported.plane.normal;
    }
    plan.truth.push_back(truth);
    plan.reported.push_back(reported);
  }
  return plan;
}

using SweepSink = std::function<void(std::size_t stop, CaptureFrame&& frame)>;

/// Renders every stop of a planned sweep and hands each capture to `sink`.
inline void render_sweep(const SweepPlan& plan, const CameraModel& cam, const ProjectorModel& proj,
                         std::span<const Pattern> patterns, const NoiseModel& noise,
                         const SweepOptions& options, const SweepSink& sink) {
  for (std::size_t k = 0; k < plan.truth.size(); ++k) {
    const Scene scene = BoardScene{plan.truth[k], options.board_half_extent};
    RenderOptions ro;
    ro.frame_index = k;
    ro.workers = options.workers;
    CaptureFrame frame = render_frame(scene, cam, proj, patterns, noise, ro);
    frame.exposure_tag = "sweep";
    sink(k, std::move(frame));
  }
}

struct SweepResult {
  std::vector<CaptureFrame> frames;
  std::vector<BoardPose> reported;
  std::vector<BoardPose> truth;
};

/// Whole sweep in memory. Prefer plan_sweep + render_sweep for large rigs.
inline SweepResult simulate_sweep(const CameraModel& cam, const ProjectorModel& proj,
                                  std::span<const Pattern> patterns, const StageRange& range,
                                  const NoiseModel& noise, const SweepOptions& options = {}) {
  const SweepPlan plan = plan_sweep(cam, range, options);
  SweepResult result;
  result.reported = plan.reported;
  result.truth = plan.truth;
  result.frames.resize(plan.truth.size());
  render_sweep(plan, cam, proj, patterns, noise, options,
               [&](std::size_t k, CaptureFrame&& f) { result.frames[k] = std::move(f); });
  return result;
}

// ---------------------------------------------------------------- Bayer

/// RGGB mosaic: even rows R G R G ..., odd rows G B G B ...
inline int bayer_channel(int x, int y) {
  if (y % 2 == 0) return x % 2 == 0 ? 0 : 1;
  return x % 2 == 0 ? 1 : 2;
}

inline Image<float> mosaic_bayer(const Image<float>& rgb) {
  if (rgb.channels() != 3) throw InvalidArgument("mosaic_bayer: need a 3-channel image");
  if (rgb.width() % 2 != 0 || rgb.height() % 2 != 0) {
    throw InvalidArgument("mosaic_bayer: dimensions must be even, got " + std::to_string(rgb.width()) +
                          "x" + std::to_string(rgb.height()));
  }
  Image<float> out(rgb.width(), rgb.height(), 1);
  for (int y = 0; y < rgb.height(); ++y) {
    for (int x = 0; x < rgb.width(); ++x) out(x, y) = rgb(x, y, bayer_channel(x, y));
  }
  return out;
}

/// Bilinear demosaic: each missing color is the mean of the same-color
/// samples in the 3x3 neighborhood.
inline Image<float> demosaic_bilinear(const Image<float>& raw) {
  if (raw.channels() != 1) throw InvalidArgument("demosaic_bilinear: need a single-channel mosaic");
  if (raw.width() % 2 != 0 || raw.height() % 2 != 0) {
    throw InvalidArgument("demosaic_bilinear: dimensions must be even");
  }
  Image<float> out(raw.width(), raw.height(), 3);
  for (int y = 0; y < raw.height(); ++y) {
    for (int x = 0; x < raw.width(); ++x) {
      const int own = bayer_channel(x, y);
      std::array<double, 3> sum{};
      std::array<int, 3> count{};
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx;
          const int yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= raw.width() || yy >= raw.height()) continue;
          const int c = bayer_channel(xx, yy);
          sum[c] += raw(xx, yy);
          ++count[c];
        }
      }
      for (int c = 0; c < 3; ++c) {
        out(x, y, c) = c == own ? raw(x, y) : static_cast<float>(sum[c] / count[c]);
      }
    }
  }
  return out;
}

}  // namespace lookup3d
