#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "test_support.hpp"

using namespace lookup3d;
using testsupport::naive_spline;
using testsupport::small_rig;

namespace {

double cubic(double x) {
  const double u = (x - 0.75) * 20.0;
  return 0.3 - 0.7 * u + 1.1 * u * u + 0.4 * u * u * u;
}

std::vector<double> uneven_sites(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> step(50e-6, 250e-6);
  std::vector<double> x{0.72};
  for (int i = 1; i < n; ++i) x.push_back(x.back() + step(rng));
  return x;
}

}  // namespace

TEST(Spline, BasisMatchesCoxDeBoor) {
  const auto x = uneven_sites(30, 1);
  const auto knots = interpolation_knots(x);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<double> coeffs(knots.size() - 4);
  for (auto& c : coeffs) c = u(rng);
  std::uniform_real_distribution<double> at(x.front(), x.back());
  for (int i = 0; i < 500; ++i) {
    const double q = at(rng);
    EXPECT_NEAR(evaluate_spline<double>(knots, coeffs, q), naive_spline(knots, coeffs, q), 1e-12);
  }
  EXPECT_NEAR(evaluate_spline<double>(knots, coeffs, x.back()), naive_spline(knots, coeffs, x.back()), 1e-12);
  EXPECT_NEAR(evaluate_spline<double>(knots, coeffs, x.front()), coeffs.front(), 1e-15);
}

TEST(Spline, BasisIsPartitionOfUnity) {
  const auto knots = interpolation_knots(uneven_sites(12, 3));
  std::array<double, 4> b;
  for (double q = knots.front(); q <= knots.back(); q += 1e-5) {
    cubic_basis<double>(knots, find_span<double>(knots, q), q, b);
    EXPECT_NEAR(b[0] + b[1] + b[2] + b[3], 1.0, 1e-13);
  }
}

TEST(Spline, InterpolationReproducesCubics) {
  const auto x = uneven_sites(80, 4);
  std::vector<double> y;
  for (double v : x) y.push_back(cubic(v));
  const auto s = fit_cubic_spline(x, y, 0.0);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> at(x.front(), x.back());
  for (int i = 0; i < 100; ++i) {
    const double q = at(rng);
    EXPECT_NEAR(s(q), cubic(q), 1e-9);
  }
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(s(x[i]), y[i], 1e-9);
}

TEST(Spline, ConstantDataGivesConstantSpline) {
  const auto x = uneven_sites(20, 6);
  const std::vector<double> y(x.size(), 0.42);
  for (double s : {0.0, 1e-3}) {
    const auto fit = fit_cubic_spline(x, y, s);
    for (double c : fit.coefficients) EXPECT_NEAR(c, 0.42, 1e-12);
  }
}

TEST(Spline, SmoothingMeetsResidualTarget) {
  const auto x = uneven_sites(300, 7);
  std::mt19937_64 rng(8);
  std::normal_distribution<double> noise(0.0, 0.01);
  std::vector<double> y;
  for (double v : x) y.push_back(0.5 + 0.3 * std::sin(v * 400.0) + noise(rng));
  SplineFitter fitter(x);
  for (double target : {0.01, 0.03, 0.1}) {
    double achieved = 0.0;
    const auto c = fitter.smooth(y, target, &achieved);
    EXPECT_LE(achieved, target * (1 + 1e-9));
    EXPECT_GE(achieved, target * 0.99);
    double ss = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) ss += std::pow(evaluate_spline<double>(fitter.knots(), c, x[i]) - y[i], 2);
    EXPECT_NEAR(ss, achieved, 1e-12);
  }
  // A target above the straight-line residual returns the line.
  double line_ss = 0.0;
  const auto line = fitter.smooth(y, 1e6, &line_ss);
  for (std::size_t i = 1; i + 1 < x.size(); ++i) {
    const double v0 = evaluate_spline<double>(fitter.knots(), line, x[i - 1]);
    const double v1 = evaluate_spline<double>(fitter.knots(), line, x[i]);
    const double v2 = evaluate_spline<double>(fitter.knots(), line, x[i + 1]);
    EXPECT_NEAR((v1 - v0) / (x[i] - x[i - 1]), (v2 - v1) / (x[i + 1] - x[i]), 1e-6);
  }
  EXPECT_THROW(fitter.smooth(y, -1.0), InvalidArgument);
}

TEST(Spline, NoiseVarianceEstimate) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> noise(0.0, 0.02);
  std::vector<double> y;
  for (int i = 0; i < 20000; ++i) y.push_back(std::sin(i * 1e-3) + noise(rng));
  EXPECT_NEAR(estimate_noise_variance(y), 0.02 * 0.02, 0.02 * 0.02 * 0.05);
}

TEST(Spline, SitesMustIncrease) {
  const std::vector<double> x{0, 1, 1, 2, 3};
  EXPECT_THROW(SplineFitter f(x), InvalidArgument);
  EXPECT_THROW(interpolation_knots(std::vector<double>{0, 1, 2}), InvalidArgument);
}

TEST(Normalize, Examples) {
  Image<float> white(4, 3, 3, 0.8f);
  Image<float> same = white;
  Image<float> half(4, 3, 3, 0.4f);
  const std::vector<Image<float>> pats{same, half};
  const auto s = normalize_stack<float>(pats, white, nullptr);
  ASSERT_EQ(s.channels(), 6);
  for (int y = 0; y < 3; ++y) {
    for (int x = 0; x < 4; ++x) {
      EXPECT_EQ(s.valid(x, y), 1);
      for (int c = 0; c < 3; ++c) {
        EXPECT_EQ(s.values(x, y, c), 1.0f);
        EXPECT_EQ(s.values(x, y, 3 + c), 0.5f);
      }
    }
  }
}

TEST(Normalize, ShadowedPixelsAreMasked) {
  Image<float> white(2, 2, 1, 0.5f);
  Image<float> ambient(2, 2, 1, 0.1f);
  white(1, 1) = 0.1f;
  white(0, 1) = 0.115f;
  Image<float> pat(2, 2, 1, 0.3f);
  const std::vector<Image<float>> pats{pat};
  const auto s = normalize_stack<float>(pats, white, &ambient);
  EXPECT_EQ(s.valid(1, 1), 0);
  EXPECT_EQ(s.valid(0, 1), 0);
  EXPECT_EQ(s.values(1, 1, 0), 0.0f);
  EXPECT_TRUE(std::isfinite(s.values(1, 1, 0)));
  EXPECT_EQ(s.valid(0, 0), 1);
  EXPECT_FLOAT_EQ(s.values(0, 0, 0), static_cast<float>((0.3 - 0.1) / (0.5 - 0.1)));
}

TEST(Normalize, NegativeNumeratorClampsToZero) {
  Image<float> white(1, 1, 1, 0.5f);
  Image<float> ambient(1, 1, 1, 0.2f);
  Image<float> pat(1, 1, 1, 0.1f);
  const std::vector<Image<float>> pats{pat};
  EXPECT_EQ(normalize_stack<float>(pats, white, &ambient).values(0, 0, 0), 0.0f);
}

TEST(Normalize, MissingWhiteIsAnError) {
  CaptureFrame f;
  f.images.push_back(Image<float>(2, 2, 1));
  f.pattern_ids.push_back("p0");
  EXPECT_THROW(normalize_stack(f), InvalidArgument);
  const std::vector<Image<float>> pats{Image<float>(3, 2, 1)};
  EXPECT_THROW(normalize_stack<float>(pats, Image<float>(2, 2, 1, 1.0f), nullptr), DimensionMismatch);
}

TEST(Normalize, ScaleInvariance) {
  const auto rig = small_rig();
  NoiseModel noise = NoiseModel::moderate(3);
  noise.ambient_level = 0.03;
  const auto frame = render_frame(PlaneScene{Plane{Vec3(0, 0, 0.745), Vec3(0, 0, -1)}, 0.25, 0.7}, rig.camera,
                                  rig.projector(), testsupport::spiral_patterns(), noise);
  std::vector<Image<double>> base;
  for (const auto& img : frame.images) {
    Image<double> d(img.width(), img.height(), img.channels());
    for (std::size_t i = 0; i < img.size(); ++i) d.values()[i] = img.values()[i];
    base.push_back(d);
  }
  const auto ref = normalize_capture<double>(base, frame.pattern_ids);
  for (double s : {0.25, 7.3, 1e3}) {
    auto scaled = base;
    for (auto& img : scaled) {
      for (auto& v : img.values()) v *= s;
    }
    const auto out = normalize_capture<double>(scaled, frame.pattern_ids);
    EXPECT_EQ(out, ref) << "scale " << s;
  }
}

TEST(Collect, FrontoBoardGivesOneSamplePerStop) {
  const auto rig = small_rig(16);
  const auto pats = testsupport::spiral_patterns(256);
  const auto sweep = simulate_sweep(rig.camera, rig.projector(), pats, rig.stage, NoiseModel{}, rig.sweep);
  std::vector<NormalizedStack> stacks;
  for (const auto& f : sweep.frames) stacks.push_back(normalize_stack(f));
  const auto samples = collect_ray_samples(stacks, rig.camera, sweep.reported);
  for (std::size_t idx = 0; idx < samples.depths.size(); ++idx) {
    EXPECT_EQ(samples.depths[idx].size(), sweep.frames.size());
    EXPECT_EQ(samples.colors[idx].size(), sweep.frames.size() * 3);
    EXPECT_TRUE(std::is_sorted(samples.depths[idx].begin(), samples.depths[idx].end()));
  }
  // The ramp channel increases or decreases monotonically along every ray.
  for (std::size_t idx = 0; idx < samples.depths.size(); ++idx) {
    const auto& col = samples.colors[idx];
    const double sign = col[3 * (sweep.frames.size() - 1)] > col[0] ? 1.0 : -1.0;
    for (std::size_t k = 1; k < sweep.frames.size(); ++k) EXPECT_GE(sign * (col[3 * k] - col[3 * (k - 1)]), -1e-6);
  }
}

TEST(Collect, TiltedBoardDepthsSatisfyPlaneEquation) {
  CameraModel cam{8, 8, 100, 100, 4, 4, 0};
  const Vec3 n = Vec3(0.2, -0.1, -1).normalized();
  std::vector<BoardPose> poses;
  std::vector<NormalizedStack> stacks;
  for (int k = 0; k < 5; ++k) {
    BoardPose p;
    p.plane = Plane{Vec3(0, 0, 0.5 + 0.01 * k), n};
    poses.push_back(p);
    stacks.push_back(NormalizedStack{Image<float>(8, 8, 1, 0.5f), Image<std::uint8_t>(8, 8, 1, 1)});
  }
  const auto samples = collect_ray_samples(stacks, cam, poses);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      const auto& d = samples.depths[samples.pixel_index(x, y)];
      ASSERT_EQ(d.size(), 5u);
      for (int k = 0; k < 5; ++k) {
        EXPECT_NEAR(poses[k].plane.signed_distance(pixel_ray(cam, x, y).at(d[k])), 0.0, 1e-9);
      }
    }
  }
  EXPECT_NE(samples.depths[0][0], samples.depths[63][0]);
}

TEST(Collect, RepeatedDepthIsAnError) {
  CameraModel cam{2, 2, 10, 10, 1, 1, 0};
  BoardPose p;
  p.plane = Plane{Vec3(0, 0, 1), Vec3(0, 0, -1)};
  const NormalizedStack s{Image<float>(2, 2, 1, 0.5f), Image<std::uint8_t>(2, 2, 1, 1)};
  EXPECT_THROW(collect_ray_samples({s, s}, cam, {p, p}), DegenerateInput);
}

TEST(Fit, TooFewSamplesMarksPixelInvalid) {
  RaySamples s;
  s.width = 2;
  s.height = 1;
  s.channels = 1;
  s.depths = {{0.1, 0.2, 0.3}, {0.1, 0.2, 0.3, 0.4, 0.5}};
  s.colors = {{1, 2, 3}, {1, 2, 3, 4, 5}};
  const auto fit = fit_ray_splines(s, CameraModel{2, 1, 1, 1, 0, 0, 0});
  EXPECT_FALSE(fit.lut.ray(0, 0).valid);
  EXPECT_FALSE(fit.report.pixels[0].valid);
  EXPECT_EQ(fit.report.pixels[0].samples, 3u);
  EXPECT_TRUE(fit.lut.ray(1, 0).valid);
  EXPECT_EQ(fit.report.valid_count(), 1u);
  EXPECT_NEAR(fit.lut.ray(1, 0).evaluate(0, 0.35f), 3.5f, 1e-5);
  EXPECT_EQ(fit.lut.depth_min(), static_cast<double>(0.1f));
}

TEST(Fit, DoubleLutReproducesCubicPerChannel) {
  RaySamples s;
  s.width = s.height = 1;
  s.channels = 2;
  const auto x = uneven_sites(60, 10);
  s.depths = {x};
  s.colors.resize(1);
  for (double v : x) {
    s.colors[0].push_back(static_cast<float>(cubic(v)));
    s.colors[0].push_back(0.5f);
  }
  const auto fit = fit_ray_splines<double>(s, CameraModel{1, 1, 1, 1, 0, 0, 0});
  const auto ray = fit.lut.ray(0, 0);
  ASSERT_TRUE(ray.valid);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(ray.evaluate(0, x[i]), static_cast<double>(static_cast<float>(cubic(x[i]))), 1e-9);
    EXPECT_NEAR(ray.evaluate(1, x[i]), 0.5, 1e-12);
  }
}

TEST(Fit, ClipNarrowsRange) {
  RaySamples s;
  s.width = s.height = 1;
  s.channels = 1;
  s.depths = {{0.1, 0.2, 0.3, 0.4, 0.5}};
  s.colors = {{1, 2, 3, 4, 5}};
  FitOptions opt;
  opt.clip_begin = 0.15;
  opt.clip_end = 0.45;
  const auto fit = fit_ray_splines<double>(s, CameraModel{1, 1, 1, 1, 0, 0, 0}, opt);
  EXPECT_DOUBLE_EQ(fit.lut.ray(0, 0).range_begin, 0.15);
  EXPECT_DOUBLE_EQ(fit.lut.ray(0, 0).range_end, 0.45);
}

TEST(Calibrate, HeldOutStopIsPredicted) {
  const auto rig = small_rig(16);
  const auto pats = testsupport::spiral_patterns();
  const auto calib = simulate_calibration(rig, pats, NoiseModel{});
  const double held = rig.stage.start + 20.5 * rig.stage.step;
  BoardPose pose;
  pose.plane = Plane{Vec3(0, 0, held), Vec3(0, 0, -1)};
  pose.albedo = rig.sweep.board_albedo;
  const auto frame = render_frame(BoardScene{pose, rig.sweep.board_half_extent}, rig.camera, rig.projector(), pats,
                                  NoiseModel{});
  const auto stack = normalize_stack(frame);
  double worst = 0.0;
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      const auto ray = calib.lut.ray(x, y);
      ASSERT_TRUE(ray.valid);
      const double d = *ray_plane_depth(pixel_ray(rig.camera, x, y), pose.plane);
      for (int c = 0; c < 3; ++c) {
        worst = std::max(worst, std::abs(static_cast<double>(ray.evaluate(c, static_cast<float>(d))) - stack.values(x, y, c)));
      }
    }
  }
  EXPECT_LE(worst, 1e-3);
}

TEST(Calibrate, IsDeterministic) {
  auto rig = small_rig(8);
  const auto pats = testsupport::spiral_patterns(256);
  CalibrationOptions opt;
  opt.fit.smoothing = SmoothingPolicy::automatic();
  const auto a = simulate_calibration(rig, pats, NoiseModel::moderate(2), opt, 1);
  const auto b = simulate_calibration(rig, pats, NoiseModel::moderate(2), opt, 3);
  EXPECT_EQ(a.lut, b.lut);
}

TEST(Calibrate, TrajectoryCorrectionRemovesPoseNoise) {
  auto rig = small_rig(8);
  rig.sweep.pose_translation_noise = 50e-6;
  rig.sweep.pose_rotation_noise_deg = 0.1;
  rig.sweep.pose_seed = 3;
  const auto pats = testsupport::spiral_patterns(256);
  const auto calib = simulate_calibration(rig, pats, NoiseModel{});
  EXPECT_GT(calib.trajectory.residual_rms, 0.0);
  const auto plan = plan_sweep(rig.camera, rig.stage, rig.sweep);
  // Projection onto the fitted line cannot undo noise along the travel
  // direction, so compare lateral offsets and normals.
  const Vec3 axis = calib.trajectory.axis;
  double raw_lateral = 0.0;
  double fixed_lateral = 0.0;
  double raw_tilt = 0.0;
  double fixed_tilt = 0.0;
  for (std::size_t k = 0; k < plan.truth.size(); ++k) {
    const auto& t = plan.truth[k].plane;
    auto lateral = [&](const Plane& p) {
      const Vec3 d = p.point - t.point;
      return (d - d.dot(axis) * axis).squaredNorm();
    };
    raw_lateral += lateral(plan.reported[k].plane);
    fixed_lateral += lateral(calib.corrected_poses[k].plane);
    raw_tilt += (plan.reported[k].plane.normal - t.normal).squaredNorm();
    fixed_tilt += (calib.corrected_poses[k].plane.normal - t.normal).squaredNorm();
  }
  EXPECT_LT(fixed_lateral, 0.1 * raw_lateral);
  EXPECT_LT(fixed_tilt, 0.1 * raw_tilt);
}

TEST(Calibrate, UncoveredPixelsAreInvalid) {
  auto rig = small_rig(16);
  rig.sweep.board_half_extent = 0.002;
  const auto calib = simulate_calibration(rig, testsupport::spiral_patterns(256), NoiseModel{});
  EXPECT_FALSE(calib.lut.ray(0, 0).valid);
  EXPECT_TRUE(calib.lut.ray(8, 8).valid);
  EXPECT_LT(calib.lut.valid_count(), 256u);
}

TEST(Calibrate, StopBookkeeping) {
  auto rig = small_rig(8);
  const auto plan = plan_sweep(rig.camera, rig.stage, rig.sweep);
  Calibrator cal(rig.camera, plan.reported);
  const auto pats = testsupport::spiral_patterns(256);
  const auto f = render_frame(BoardScene{plan.truth[0]}, rig.camera, rig.projector(), pats, NoiseModel{});
  cal.add(0, f);
  EXPECT_THROW(cal.add(0, f), InvalidArgument);
  EXPECT_THROW(cal.add(plan.truth.size(), f), InvalidArgument);
  EXPECT_THROW(std::move(cal).finish(), InvalidArgument);
}
