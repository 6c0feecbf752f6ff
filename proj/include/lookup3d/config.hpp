#pragma once

// Text configuration: unit-suffixed quantities, the rig description file and
// the pattern spec file.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "lookup3d/core.hpp"
#include "lookup3d/geometry.hpp"
#include "lookup3d/patterns.hpp"
#include "lookup3d/persistence.hpp"
#include "lookup3d/simulator.hpp"

namespace lookup3d {

// ---------------------------------------------------------------- units

namespace detail {

struct UnitScale {
  std::string_view suffix;
  double scale;
};

inline double parse_with_units(std::string_view text, std::span<const UnitScale> units, std::string_view what,
                               std::string_view kind) {
  const std::string t = trim(text);
  for (const auto& u : units) {
    if (t.size() > u.suffix.size() && t.ends_with(u.suffix)) {
      const std::string_view number(t.data(), t.size() - u.suffix.size());
      // A longer suffix sharing this ending ("mm" vs "m") leaves a letter behind.
      if (!number.empty() && std::isalpha(static_cast<unsigned char>(number.back()))) continue;
      double v = 0.0;
      try {
        v = parse_double(number, what);
      } catch (const FormatError&) {
        break;
      }
      if (!std::isfinite(v)) break;
      return v * u.scale;
    }
  }
  std::string accepted;
  for (const auto& u : units) accepted += (accepted.empty() ? "" : ", ") + std::string(u.suffix);
  throw InvalidArgument(std::string(what) + ": '" + t + "' is not a " + std::string(kind) + " with a unit suffix (" +
                        accepted + ")");
}

inline constexpr UnitScale kLengthUnits[] = {{"um", 1e-6}, {"mm", 1e-3}, {"cm", 1e-2}, {"m", 1.0}};
inline constexpr UnitScale kAngleUnits[] = {{"deg", std::numbers::pi / 180.0}, {"rad", 1.0}};

}  // namespace detail

/// Length with a mandatory unit suffix: "10um", "0.5mm", "1cm", "0.75m".
inline double parse_length(std::string_view text, std::string_view what = "length") {
  return detail::parse_with_units(text, detail::kLengthUnits, what, "length");
}

/// Angle with a mandatory unit suffix: "5deg", "0.1rad".
inline double parse_angle(std::string_view text, std::string_view what = "angle") {
  return detail::parse_with_units(text, detail::kAngleUnits, what, "angle");
}

/// "start:end:step", each a length with units.
inline StageRange parse_stage_range(std::string_view text, std::string_view what = "range") {
  const auto parts = split_words(text, ':');
  if (parts.size() != 3) {
    throw InvalidArgument(std::string(what) + ": expected start:end:step, got '" + std::string(text) + "'");
  }
  StageRange r{parse_length(parts[0], what), parse_length(parts[1], what), parse_length(parts[2], what)};
  if (!(r.start < r.end)) throw InvalidArgument(std::string(what) + ": start must be below end");
  if (!(r.step > 0.0)) throw InvalidArgument(std::string(what) + ": step must be positive");
  return r;
}

// ---------------------------------------------------------------- rig file

inline constexpr std::string_view kRigMagic = "lookup3d-rig";
inline constexpr int kRigVersion = 1;

/// Everything needed to simulate the scanner: camera, projector, noise,
/// stage and board.
struct Rig {
  CameraModel camera;
  /// Projector rotation (axis * angle, radians) and position, camera frame.
  Vec3 projector_axis_angle = Vec3(0.0, -15.0 * std::numbers::pi / 180.0, 0.0);
  Vec3 projector_translation = Vec3(0.2, 0.0, 0.0);
  double coded_axis_fov = 0.1;
  double blur_sigma = 1.5;
  double response_gamma = 1.0;
  double vignetting_strength = 0.0;
  /// Pattern kind or the name of a section in a pattern spec file.
  std::string pattern = "spiral";
  NoiseModel noise;
  StageRange stage;
  SweepOptions sweep;

  ProjectorModel projector() const {
    ProjectorModel p;
    p.pose = RigidTransform::from_axis_angle(projector_axis_angle, projector_translation);
    p.coded_axis_fov = coded_axis_fov;
    p.blur_sigma = blur_sigma;
    p.response_gamma = response_gamma;
    p.vignetting_strength = vignetting_strength;
    return p;
  }
  void validate() const {
    camera.validate();
    projector().validate();
    noise.validate();
    stage.validate();
  }
};

namespace detail {

inline std::vector<double> vec(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

inline Vec3 vec3(const KeyValueFile& kv, std::string_view key) {
  const auto v = kv.numbers(key);
  if (v.size() != 3) throw FormatError(kv.source() + ": key '" + std::string(key) + "' needs 3 numbers");
  return Vec3(v[0], v[1], v[2]);
}

}  // namespace detail

inline std::string encode_rig(const Rig& rig) {
  KeyValueFile kv(std::string(kRigMagic) + " " + std::to_string(kRigVersion));
  kv.set("camera.width", rig.camera.width);
  kv.set("camera.height", rig.camera.height);
  kv.set("camera.fx", rig.camera.fx);
  kv.set("camera.fy", rig.camera.fy);
  kv.set("camera.cx", rig.camera.cx);
  kv.set("camera.cy", rig.camera.cy);
  kv.set("camera.k1", rig.camera.k1);
  kv.set_numbers("projector.axis_angle", detail::vec(rig.projector_axis_angle));
  kv.set_numbers("projector.translation", detail::vec(rig.projector_translation));
  kv.set("projector.coded_axis_fov", rig.coded_axis_fov);
  kv.set("projector.blur_sigma", rig.blur_sigma);
  kv.set("projector.response_gamma", rig.response_gamma);
  kv.set("projector.vignetting", rig.vignetting_strength);
  kv.set("pattern", rig.pattern);
  kv.set("noise.read", rig.noise.read_noise_sigma);
  kv.set("noise.shot", rig.noise.shot_noise_scale);
  kv.set("noise.ambient", rig.noise.ambient_level);
  kv.set_numbers("noise.gains", {rig.noise.channel_gains[0], rig.noise.channel_gains[1], rig.noise.channel_gains[2]});
  kv.set("noise.seed", std::to_string(rig.noise.seed));
  kv.set("stage.start", rig.stage.start);
  kv.set("stage.end", rig.stage.end);
  kv.set("stage.step", rig.stage.step);
  kv.set_numbers("stage.axis", detail::vec(rig.sweep.stage_axis));
  kv.set_numbers("stage.origin", detail::vec(rig.sweep.stage_origin));
  kv.set_numbers("board.normal", detail::vec(rig.sweep.board_normal));
  kv.set("board.half_extent", rig.sweep.board_half_extent);
  kv.set("board.albedo", rig.sweep.board_albedo);
  kv.set("board.pose_translation_noise", rig.sweep.pose_translation_noise);
  kv.set("board.pose_rotation_noise_deg", rig.sweep.pose_rotation_noise_deg);
  kv.set("board.pose_seed", std::to_string(rig.sweep.pose_seed));
  return kv.str();
}

inline std::uint64_t parse_seed(std::string_view text, std::string_view what) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw FormatError(std::string(what) + ": '" + std::string(text) + "' is not an unsigned integer seed");
  }
  return v;
}

/// Parses a rig file. Every key is optional except the header; missing keys
/// keep their defaults, unknown keys are an error.
inline Rig decode_rig(std::string_view text, const std::string& what = "rig") {
  const KeyValueFile kv = KeyValueFile::parse(text, what);
  const auto header = split_words(kv.header());
  if (header.size() != 2 || header[0] != kRigMagic) {
    throw FormatError(what + ": missing '" + std::string(kRigMagic) + " <version>' header");
  }
  if (parse_integer(header[1], what) != kRigVersion) throw FormatError(what + ": unsupported rig version " + header[1]);
  static const std::vector<std::string> known = {
      "camera.width", "camera.height", "camera.fx", "camera.fy", "camera.cx", "camera.cy", "camera.k1",
      "projector.axis_angle", "projector.translation", "projector.coded_axis_fov", "projector.blur_sigma",
      "projector.response_gamma", "projector.vignetting", "pattern", "noise.read", "noise.shot", "noise.ambient",
      "noise.gains", "noise.seed", "stage.start", "stage.end", "stage.step", "stage.axis", "stage.origin",
      "board.normal", "board.half_extent", "board.albedo", "board.pose_translation_noise",
      "board.pose_rotation_noise_deg", "board.pose_seed"};
  for (const auto& [k, v] : kv.entries()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) throw FormatError(what + ": unknown key '" + k + "'");
  }
  Rig rig;
  auto& cam = rig.camera;
  cam.width = static_cast<int>(kv.integer_or("camera.width", cam.width));
  cam.height = static_cast<int>(kv.integer_or("camera.height", cam.height));
  cam.fx = kv.number_or("camera.fx", cam.fx);
  cam.fy = kv.number_or("camera.fy", cam.fy);
  cam.cx = kv.number_or("camera.cx", cam.cx);
  cam.cy = kv.number_or("camera.cy", cam.cy);
  cam.k1 = kv.number_or("camera.k1", cam.k1);
  if (kv.has("projector.axis_angle")) rig.projector_axis_angle = detail::vec3(kv, "projector.axis_angle");
  if (kv.has("projector.translation")) rig.projector_translation = detail::vec3(kv, "projector.translation");
  rig.coded_axis_fov = kv.number_or("projector.coded_axis_fov", rig.coded_axis_fov);
  rig.blur_sigma = kv.number_or("projector.blur_sigma", rig.blur_sigma);
  rig.response_gamma = kv.number_or("projector.response_gamma", rig.response_gamma);
  rig.vignetting_strength = kv.number_or("projector.vignetting", rig.vignetting_strength);
  rig.pattern = kv.text_or("pattern", rig.pattern);
  rig.noise.read_noise_sigma = kv.number_or("noise.read", rig.noise.read_noise_sigma);
  rig.noise.shot_noise_scale = kv.number_or("noise.shot", rig.noise.shot_noise_scale);
  rig.noise.ambient_level = kv.number_or("noise.ambient", rig.noise.ambient_level);
  if (kv.has("noise.gains")) {
    const auto g = kv.numbers("noise.gains");
    if (g.size() != 3) throw FormatError(what + ": key 'noise.gains' needs 3 numbers");
    rig.noise.channel_gains = {g[0], g[1], g[2]};
  }
  if (kv.has("noise.seed")) rig.noise.seed = parse_seed(kv.require("noise.seed"), what + ": key 'noise.seed'");
  rig.stage.start = kv.number_or("stage.start", rig.stage.start);
  rig.stage.end = kv.number_or("stage.end", rig.stage.end);
  rig.stage.step = kv.number_or("stage.step", rig.stage.step);
  if (kv.has("stage.axis")) rig.sweep.stage_axis = detail::vec3(kv, "stage.axis");
  if (kv.has("stage.origin")) rig.sweep.stage_origin = detail::vec3(kv, "stage.origin");
  if (kv.has("board.normal")) rig.sweep.board_normal = detail::vec3(kv, "board.normal");
  rig.sweep.board_half_extent = kv.number_or("board.half_extent", rig.sweep.board_half_extent);
  rig.sweep.board_albedo = kv.number_or("board.albedo", rig.sweep.board_albedo);
  rig.sweep.pose_translation_noise = kv.number_or("board.pose_translation_noise", rig.sweep.pose_translation_noise);
  rig.sweep.pose_rotation_noise_deg =
      kv.number_or("board.pose_rotation_noise_deg", rig.sweep.pose_rotation_noise_deg);
  if (kv.has("board.pose_seed")) {
    rig.sweep.pose_seed = parse_seed(kv.require("board.pose_seed"), what + ": key 'board.pose_seed'");
  }
  try {
    rig.validate();
  } catch (const InvalidArgument& e) {
    throw FormatError(what + ": " + e.what());
  }
  return rig;
}

inline void write_rig(const std::filesystem::path& path, const Rig& rig) { write_file(path, encode_rig(rig)); }
inline Rig read_rig(const std::filesystem::path& path) { return decode_rig(read_file(path), path.string()); }

/// Named noise profiles accepted on the command line.
inline NoiseModel noise_profile(std::string_view name, std::uint64_t seed) {
  if (name == "none") {
    NoiseModel n;
    n.seed = seed;
    return n;
  }
  if (name == "moderate") return NoiseModel::moderate(seed);
  if (name == "high") {
    NoiseModel n = NoiseModel::moderate(seed);
    n.read_noise_sigma *= 2.0;
    n.shot_noise_scale *= 2.0;
    return n;
  }
  throw InvalidArgument("unknown noise profile '" + std::string(name) + "' (expected none, moderate, high)");
}

// ---------------------------------------------------------------- pattern spec file
//
//   [spiral]
//   kind = spiral
//   resolution = 1024
//   carrier_frequency = 8
//
// Sections are named patterns; keys other than kind/resolution/channels set
// the parameters of that kind.

struct NamedPatternSpec {
  std::string name;
  PatternSpec spec;
  /// Reorder channels so the busiest one sits on green.
  bool assign_channels = false;
};

namespace detail {

inline std::array<double, 3> triple(const KeyValueFile& kv, std::string_view key, std::array<double, 3> fallback) {
  if (!kv.has(key)) return fallback;
  const auto v = kv.numbers(key);
  if (v.size() != 3) throw FormatError(kv.source() + ": key '" + std::string(key) + "' needs 3 numbers");
  return {v[0], v[1], v[2]};
}

inline NamedPatternSpec parse_pattern_section(const std::string& name, const KeyValueFile& kv) {
  const std::string where = kv.source();
  NamedPatternSpec out;
  out.name = name;
  PatternKind kind;
  try {
    kind = parse_pattern_kind(kv.require("kind"));
  } catch (const InvalidArgument& e) {
    throw FormatError(where + ": " + e.what());
  }
  out.spec = make_pattern_spec(kind, static_cast<int>(kv.integer_or("resolution", 1024)),
                               static_cast<int>(kv.integer_or("channels", kind == PatternKind::graycode ? 1 : 3)));
  out.assign_channels = kv.integer_or("assign_channels", 0) != 0;
  std::vector<std::string> allowed = {"kind", "resolution", "channels", "assign_channels"};
  switch (kind) {
    case PatternKind::random: {
      RandomParams p;
      if (kv.has("seed")) p.seed = parse_seed(kv.require("seed"), where + ": key 'seed'");
      p.knots = static_cast<int>(kv.integer_or("knots", p.knots));
      out.spec.params = p;
      allowed.insert(allowed.end(), {"seed", "knots"});
      break;
    }
    case PatternKind::lissajous: {
      LissajousParams p;
      p.frequencies = triple(kv, "frequencies", p.frequencies);
      p.phases = triple(kv, "phases", p.phases);
      out.spec.params = p;
      allowed.insert(allowed.end(), {"frequencies", "phases"});
      break;
    }
    case PatternKind::stairs: {
      StairsParams p;
      p.frequencies = triple(kv, "frequencies", p.frequencies);
      out.spec.params = p;
      allowed.push_back("frequencies");
      break;
    }
    case PatternKind::spiral: {
      SpiralParams p;
      p.ramp_slope = kv.number_or("ramp_slope", p.ramp_slope);
      p.carrier_frequency = kv.number_or("carrier_frequency", p.carrier_frequency);
      p.modulation_frequency = kv.number_or("modulation_frequency", p.modulation_frequency);
      p.amplitude_min = kv.number_or("amplitude_min", p.amplitude_min);
      p.amplitude_max = kv.number_or("amplitude_max", p.amplitude_max);
      out.spec.params = p;
      allowed.insert(allowed.end(),
                     {"ramp_slope", "carrier_frequency", "modulation_frequency", "amplitude_min", "amplitude_max"});
      break;
    }
    case PatternKind::graycode: {
      GraycodeParams p;
      p.stripe_width = static_cast<int>(kv.integer_or("stripe_width", p.stripe_width));
      out.spec.params = p;
      allowed.push_back("stripe_width");
      break;
    }
    case PatternKind::white:
      break;
  }
  for (const auto& [k, v] : kv.entries()) {
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end()) {
      throw FormatError(where + ": key '" + k + "' does not apply to " + std::string(to_string(kind)) + " patterns");
    }
  }
  try {
    validate(out.spec);
  } catch (const InvalidArgument& e) {
    throw FormatError(where + ": " + e.what());
  }
  return out;
}

}  // namespace detail

inline std::vector<NamedPatternSpec> decode_pattern_specs(std::string_view text, const std::string& what = "patterns") {
  std::vector<NamedPatternSpec> out;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::string section;
  std::string body;
  int line_no = 0;
  int section_line = 0;
  auto flush = [&] {
    if (section.empty()) return;
    for (const auto& s : out) {
      if (s.name == section) throw FormatError(what + ":" + std::to_string(section_line) + ": duplicate section [" + section + "]");
    }
    const auto kv = KeyValueFile::parse(body, what + " [" + section + "]");
    out.push_back(detail::parse_pattern_section(section, kv));
  };
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw FormatError(what + ":" + std::to_string(line_no) + ": malformed section header");
      }
      flush();
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      section_line = line_no;
      body.clear();
      continue;
    }
    if (section.empty()) throw FormatError(what + ":" + std::to_string(line_no) + ": key outside a [section]");
    if (line.find('=') == std::string::npos) {
      throw FormatError(what + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    body += line + "\n";
  }
  flush();
  if (out.empty()) throw FormatError(what + ": no pattern sections");
  return out;
}

inline std::vector<NamedPatternSpec> read_pattern_specs(const std::filesystem::path& path) {
  return decode_pattern_specs(read_file(path), path.string());
}

/// Generates the projected pattern set of a named spec: every bit plane for
/// gray codes, one pattern otherwise.
inline std::vector<Pattern> build_patterns(const NamedPatternSpec& named) {
  auto set = gen_pattern_set(named.spec);
  if (named.assign_channels) {
    for (auto& p : set) p = assign_channels(p);
  }
  return set;
}

/// Resolves a rig's pattern reference: a section of `specs` if present,
/// otherwise a pattern kind with default parameters.
inline NamedPatternSpec resolve_pattern(const std::string& ref, const std::vector<NamedPatternSpec>& specs = {}) {
  for (const auto& s : specs) {
    if (s.name == ref) return s;
  }
  NamedPatternSpec out;
  out.name = ref;
  out.spec = make_pattern_spec(parse_pattern_kind(ref));
  return out;
}

}  // namespace lookup3d
