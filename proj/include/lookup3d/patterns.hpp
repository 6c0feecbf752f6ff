#pragma once

// One-dimensional code patterns and their confusion analysis.
//
// A pattern maps a normalized position t in [0, 1] along the coded axis of the
// projector to an intensity per channel. Patterns are stored sampled at
// t_i = i / (resolution - 1).

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "lookup3d/bspline.hpp"
#include "lookup3d/core.hpp"

namespace lookup3d {

enum class PatternKind { random, lissajous, stairs, spiral, graycode, white };

inline std::string_view to_string(PatternKind kind) {
  switch (kind) {
    case PatternKind::random: return "random";
    case PatternKind::lissajous: return "lissajous";
    case PatternKind::stairs: return "stairs";
    case PatternKind::spiral: return "spiral";
    case PatternKind::graycode: return "graycode";
    case PatternKind::white: return "white";
  }
  return "unknown";
}

inline PatternKind parse_pattern_kind(std::string_view name) {
  for (auto k : {PatternKind::random, PatternKind::lissajous, PatternKind::stairs,
                 PatternKind::spiral, PatternKind::graycode, PatternKind::white}) {
    if (to_string(k) == name) return k;
  }
  throw InvalidArgument("unknown pattern kind '" + std::string(name) + "'");
}

/// Cubic B-spline through `knots` random control colors at uniform positions.
struct RandomParams {
  std::uint64_t seed = 1;
  int knots = 16;
  friend bool operator==(const RandomParams&, const RandomParams&) = default;
};

/// 0.5 + 0.5 sin(2 pi f t + phase) per channel.
struct LissajousParams {
  std::array<double, 3> frequencies{1.0, 3.0, 4.0};
  std::array<double, 3> phases{std::numbers::pi / 2.0, 0.0, 0.0};
  friend bool operator==(const LissajousParams&, const LissajousParams&) = default;
};

/// Sawtooth ramps rising over (0, 1] f times along the axis.
struct StairsParams {
  std::array<double, 3> frequencies{1.0, 4.0, 16.0};
  friend bool operator==(const StairsParams&, const StairsParams&) = default;
};

/// Channel 0 is a linear ramp; channels 1 and 2 are a sine/cosine carrier
/// whose amplitude follows a triangle wave between the two bounds.
struct SpiralParams {
  double ramp_slope = 1.0;
  double carrier_frequency = 8.0;
  double modulation_frequency = 1.0;
  double amplitude_min = 0.15;
  double amplitude_max = 0.45;
  friend bool operator==(const SpiralParams&, const SpiralParams&) = default;
};

/// One bit plane of a reflected binary code, most significant plane first.
struct GraycodeParams {
  int stripe_width = 1;
  int bit = 0;
  friend bool operator==(const GraycodeParams&, const GraycodeParams&) = default;
};

struct WhiteParams {
  friend bool operator==(const WhiteParams&, const WhiteParams&) = default;
};

using PatternParams =
    std::variant<RandomParams, LissajousParams, StairsParams, SpiralParams, GraycodeParams, WhiteParams>;

struct PatternSpec {
  PatternKind kind = PatternKind::spiral;
  int resolution = 1024;
  int channels = 3;
  PatternParams params = SpiralParams{};
  /// Output channel k holds generated channel channel_order[k].
  std::array<int, 3> channel_order{0, 1, 2};

  friend bool operator==(const PatternSpec&, const PatternSpec&) = default;
};

inline PatternParams default_params(PatternKind kind) {
  switch (kind) {
    case PatternKind::random: return RandomParams{};
    case PatternKind::lissajous: return LissajousParams{};
    case PatternKind::stairs: return StairsParams{};
    case PatternKind::spiral: return SpiralParams{};
    case PatternKind::graycode: return GraycodeParams{};
    case PatternKind::white: return WhiteParams{};
  }
  return WhiteParams{};
}

/// Spec with default parameters for `kind`.
inline PatternSpec make_pattern_spec(PatternKind kind, int resolution = 1024, int channels = 3) {
  PatternSpec spec;
  spec.kind = kind;
  spec.resolution = resolution;
  spec.channels = kind == PatternKind::graycode ? 1 : channels;
  spec.params = default_params(kind);
  return spec;
}

struct Pattern {
  PatternSpec spec;
  /// resolution x channels, row-major by sample.
  std::vector<double> values;

  int resolution() const { return spec.resolution; }
  int channels() const { return spec.channels; }
  double at(int sample, int channel) const {
    return values[static_cast<std::size_t>(sample) * spec.channels + channel];
  }
  double& at(int sample, int channel) {
    return values[static_cast<std::size_t>(sample) * spec.channels + channel];
  }
  friend bool operator==(const Pattern&, const Pattern&) = default;
};

/// Number of codewords needed along the axis for a graycode spec.
inline int graycode_positions(const PatternSpec& spec) {
  const auto& p = std::get<GraycodeParams>(spec.params);
  return (spec.resolution + p.stripe_width - 1) / p.stripe_width;
}

inline int graycode_bit_count(int positions) {
  if (positions < 2) return 1;
  return static_cast<int>(std::bit_width(static_cast<unsigned>(positions - 1)));
}

/// Throws InvalidArgument describing the first violated constraint.
inline void validate(const PatternSpec& spec) {
  auto fail = [&](const std::string& msg) {
    throw InvalidArgument(std::string(to_string(spec.kind)) + " pattern: " + msg);
  };
  if (spec.resolution < 2) fail("resolution must be >= 2");
  if (spec.channels != 1 && spec.channels != 3) fail("channels must be 1 or 3");
  const bool params_match = std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        switch (spec.kind) {
          case PatternKind::random: return std::is_same_v<P, RandomParams>;
          case PatternKind::lissajous: return std::is_same_v<P, LissajousParams>;
          case PatternKind::stairs: return std::is_same_v<P, StairsParams>;
          case PatternKind::spiral: return std::is_same_v<P, SpiralParams>;
          case PatternKind::graycode: return std::is_same_v<P, GraycodeParams>;
          case PatternKind::white: return std::is_same_v<P, WhiteParams>;
        }
        return false;
      },
      spec.params);
  if (!params_match) fail("parameter set does not match the pattern kind");

  auto order = spec.channel_order;
  std::sort(order.begin(), order.end());
  if (order != std::array<int, 3>{0, 1, 2}) fail("channel_order must be a permutation of 0,1,2");

  switch (spec.kind) {
    case PatternKind::random: {
      const auto& p = std::get<RandomParams>(spec.params);
      if (p.knots < 4) fail("random pattern needs at least 4 control colors");
      break;
    }
    case PatternKind::lissajous: {
      for (double f : std::get<LissajousParams>(spec.params).frequencies) {
        if (!(f > 0.0)) fail("frequencies must be > 0");
      }
      break;
    }
    case PatternKind::stairs: {
      for (double f : std::get<StairsParams>(spec.params).frequencies) {
        if (!(f > 0.0)) fail("frequencies must be > 0");
      }
      break;
    }
    case PatternKind::spiral: {
      const auto& p = std::get<SpiralParams>(spec.params);
      if (spec.channels != 3) fail("spiral needs 3 channels");
      if (!(p.ramp_slope > 0.0 && p.ramp_slope <= 1.0)) fail("ramp_slope must be in (0, 1]");
      if (!(p.carrier_frequency > 0.0)) fail("carrier_frequency must be > 0");
      if (!(p.modulation_frequency > 0.0)) fail("modulation_frequency must be > 0");
      if (!(p.amplitude_min >= 0.0 && p.amplitude_max <= 0.5 && p.amplitude_min <= p.amplitude_max)) {
        fail("amplitude bounds must satisfy 0 <= min <= max <= 0.5");
      }
      break;
    }
    case PatternKind::graycode: {
      const auto& p = std::get<GraycodeParams>(spec.params);
      if (spec.channels != 1) fail("graycode requires channels = 1, got " + std::to_string(spec.channels));
      if (p.stripe_width < 1) fail("stripe_width must be >= 1");
      const int bits = graycode_bit_count(graycode_positions(spec));
      if (p.bit < 0 || p.bit >= bits) {
        fail("bit must be in [0, " + std::to_string(bits) + ")");
      }
      break;
    }
    case PatternKind::white: break;
  }
}

namespace detail {

inline double sawtooth(double x) {
  if (x <= 0.0) return 0.0;
  return x - std::ceil(x) + 1.0;
}

inline double triangle(double x) {
  const double f = x - std::floor(x);
  return 1.0 - std::abs(2.0 * f - 1.0);
}

// Uniform double in [0, 1) from the top 53 bits; independent of the
// standard library's distribution implementations.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::uint32_t to_gray(std::uint32_t v) { return v ^ (v >> 1); }

}  // namespace detail

/// Evaluates generated channel `channel` (before channel_order is applied) of
/// an analytic pattern at t in [0, 1]. Random patterns are sampled only.
inline double evaluate_pattern_channel(const PatternSpec& spec, int channel, double t) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  switch (spec.kind) {
    case PatternKind::lissajous: {
      const auto& p = std::get<LissajousParams>(spec.params);
      return 0.5 + 0.5 * std::sin(two_pi * p.frequencies[channel] * t + p.phases[channel]);
    }
    case PatternKind::stairs: {
      const auto& p = std::get<StairsParams>(spec.params);
      return detail::sawtooth(p.frequencies[channel] * t);
    }
    case PatternKind::spiral: {
      const auto& p = std::get<SpiralParams>(spec.params);
      if (channel == 0) return std::clamp(0.5 + p.ramp_slope * (t - 0.5), 0.0, 1.0);
      const double amplitude =
          p.amplitude_min +
          (p.amplitude_max - p.amplitude_min) * detail::triangle(p.modulation_frequency * t);
      const double phase = two_pi * p.carrier_frequency * t;
      return 0.5 + amplitude * (channel == 1 ? std::sin(phase) : std::cos(phase));
    }
    case PatternKind::white: return 1.0;
    case PatternKind::graycode: {
      const auto& p = std::get<GraycodeParams>(spec.params);
      const int positions = graycode_positions(spec);
      const int bits = graycode_bit_count(positions);
      const int sample = static_cast<int>(std::lround(std::clamp(t, 0.0, 1.0) * (spec.resolution - 1)));
      const auto code = detail::to_gray(static_cast<std::uint32_t>(sample / p.stripe_width));
      return static_cast<double>((code >> (bits - 1 - p.bit)) & 1u);
    }
    case PatternKind::random:
      throw InvalidArgument("random patterns have no analytic form; use gen_pattern");
  }
  return 0.0;
}

/// Samples the pattern described by `spec`. Deterministic for a given spec.
inline Pattern gen_pattern(const PatternSpec& spec) {
  validate(spec);
  Pattern out;
  out.spec = spec;
  const int n = spec.resolution;
  const int ch = spec.channels;
  out.values.assign(static_cast<std::size_t>(n) * ch, 0.0);

  std::vector<double> generated(static_cast<std::size_t>(n) * ch);
  if (spec.kind == PatternKind::random) {
    const auto& p = std::get<RandomParams>(spec.params);
    std::mt19937_64 rng(p.seed);
    std::vector<double> sites(static_cast<std::size_t>(p.knots));
    for (int k = 0; k < p.knots; ++k) sites[k] = static_cast<double>(k) / (p.knots - 1);
    SplineFitter fitter(sites);
    std::vector<std::vector<double>> controls(ch, std::vector<double>(p.knots));
    for (int k = 0; k < p.knots; ++k) {
      for (int c = 0; c < ch; ++c) controls[c][k] = detail::unit_uniform(rng);
    }
    std::vector<std::span<const double>> views(controls.begin(), controls.end());
    const auto coeffs = fitter.interpolate(views);
    for (int i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / (n - 1);
      for (int c = 0; c < ch; ++c) {
        const double v = evaluate_spline<double>(fitter.knots(), coeffs[c], t);
        generated[static_cast<std::size_t>(i) * ch + c] = std::clamp(v, 0.0, 1.0);
      }
    }
  } else {
    for (int i = 0; i < n; ++i) {
      const double t = static_cast<double>(i) / (n - 1);
      for (int c = 0; c < ch; ++c) {
        generated[static_cast<std::size_t>(i) * ch + c] =
            std::clamp(evaluate_pattern_channel(spec, c, t), 0.0, 1.0);
      }
    }
  }

  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < ch; ++c) {
      const int src = ch == 3 ? spec.channel_order[c] : c;
      out.at(i, c) = generated[static_cast<std::size_t>(i) * ch + src];
    }
  }
  return out;
}

/// All bit planes for a graycode spec; a single pattern for other kinds.
inline std::vector<Pattern> gen_pattern_set(const PatternSpec& spec) {
  if (spec.kind != PatternKind::graycode) return {gen_pattern(spec)};
  PatternSpec plane = spec;
  std::get<GraycodeParams>(plane.params).bit = 0;
  validate(plane);
  const int bits = graycode_bit_count(graycode_positions(spec));
  std::vector<Pattern> out;
  out.reserve(bits);
  for (int b = 0; b < bits; ++b) {
    std::get<GraycodeParams>(plane.params).bit = b;
    out.push_back(gen_pattern(plane));
  }
  return out;
}

/// ceil(log2(width)) binary planes giving every position a unique codeword.
inline std::vector<Pattern> graycode_stack(int width) {
  if (width < 2) throw InvalidArgument("graycode_stack: width must be >= 2");
  PatternSpec spec = make_pattern_spec(PatternKind::graycode, width, 1);
  return gen_pattern_set(spec);
}

enum class ConfusionNormalization { none, per_pattern_max };

struct ConfusionMatrix {
  int size = 0;
  ConfusionNormalization normalization = ConfusionNormalization::per_pattern_max;
  std::vector<double> entries;

  double operator()(int i, int j) const {
    return entries[static_cast<std::size_t>(i) * size + j];
  }
  double max() const {
    return entries.empty() ? 0.0 : *std::max_element(entries.begin(), entries.end());
  }
};

namespace detail {
inline double color_distance(const Pattern& p, int i, int j) {
  double acc = 0.0;
  for (int c = 0; c < p.channels(); ++c) {
    const double d = p.at(i, c) - p.at(j, c);
    acc += d * d;
  }
  return std::sqrt(acc);
}
}  // namespace detail

/// Pairwise L2 color distances between all sample positions.
inline ConfusionMatrix confusion_matrix(
    const Pattern& p, ConfusionNormalization normalization = ConfusionNormalization::per_pattern_max) {
  const int n = p.resolution();
  ConfusionMatrix m;
  m.size = n;
  m.normalization = normalization;
  m.entries.assign(static_cast<std::size_t>(n) * n, 0.0);
  double peak = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double d = detail::color_distance(p, i, j);
      m.entries[static_cast<std::size_t>(i) * n + j] = d;
      m.entries[static_cast<std::size_t>(j) * n + i] = d;
      peak = std::max(peak, d);
    }
  }
  if (normalization == ConfusionNormalization::per_pattern_max && peak > 0.0) {
    for (auto& e : m.entries) e /= peak;
  }
  return m;
}

/// Smallest color distance between positions more than `exclusion_band`
/// samples apart. Zero means two distinct positions share a code.
inline double min_separation(const Pattern& p, int exclusion_band) {
  const int n = p.resolution();
  if (exclusion_band < 1 || exclusion_band >= n) {
    throw InvalidArgument("min_separation: exclusion_band must be in [1, resolution)");
  }
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    for (int j = i + exclusion_band + 1; j < n; ++j) {
      best = std::min(best, detail::color_distance(p, i, j));
    }
  }
  return std::isfinite(best) ? best : 0.0;
}

/// Mean absolute finite difference of one channel.
inline double mean_abs_difference(const Pattern& p, int channel) {
  double acc = 0.0;
  for (int i = 1; i < p.resolution(); ++i) acc += std::abs(p.at(i, channel) - p.at(i - 1, channel));
  return acc / (p.resolution() - 1);
}

/// Moves the channel with the highest spatial frequency to index 1 (green),
/// which has the lowest noise on a Bayer sensor.
inline Pattern assign_channels(const Pattern& p) {
  if (p.channels() != 3) {
    throw InvalidArgument("assign_channels: pattern has " + std::to_string(p.channels()) +
                          " channels, need 3");
  }
  std::array<double, 3> activity{};
  for (int c = 0; c < 3; ++c) activity[c] = mean_abs_difference(p, c);
  int best = 1;
  for (int c : {0, 2}) {
    if (activity[c] > activity[best]) best = c;
  }
  std::array<int, 3> perm{0, 1, 2};
  std::swap(perm[1], perm[best]);

  Pattern out = p;
  for (int i = 0; i < p.resolution(); ++i) {
    for (int c = 0; c < 3; ++c) out.at(i, c) = p.at(i, perm[c]);
  }
  for (int c = 0; c < 3; ++c) out.spec.channel_order[c] = p.spec.channel_order[perm[c]];
  return out;
}

/// CSV with header t,c0[,c1,c2].
inline std::string pattern_csv(const Pattern& p) {
  std::ostringstream os;
  os.precision(17);
  os << "t";
  for (int c = 0; c < p.channels(); ++c) os << ",c" << c;
  os << "\n";
  for (int i = 0; i < p.resolution(); ++i) {
    os << static_cast<double>(i) / (p.resolution() - 1);
    for (int c = 0; c < p.channels(); ++c) os << "," << p.at(i, c);
    os << "\n";
  }
  return os.str();
}

inline std::string confusion_csv(const ConfusionMatrix& m) {
  std::ostringstream os;
  os.precision(9);
  for (int i = 0; i < m.size; ++i) {
    for (int j = 0; j < m.size; ++j) {
      if (j) os << ",";
      os << m(i, j);
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace lookup3d
