// lookup3d: command-line front end for pattern design, simulation,
// calibration, reconstruction and evaluation.

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lookup3d/lookup3d.hpp"

namespace fs = std::filesystem;
using namespace lookup3d;

namespace {

constexpr const char* kManifestName = "manifest.txt";
constexpr const char* kSpecName = "spec.ini";

struct UsageError : Error {
  using Error::Error;
};

void require_file(const fs::path& p, const std::string& what) {
  if (!fs::is_regular_file(p)) throw UsageError(what + " '" + p.string() + "' does not exist or is not a file");
}
void require_dir(const fs::path& p, const std::string& what) {
  if (!fs::is_directory(p)) throw UsageError(what + " '" + p.string() + "' does not exist or is not a directory");
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback) {
  if (flag) return *flag;
  if (const char* env = std::getenv("LOOKUP3D_SEED")) return parse_seed(env, "LOOKUP3D_SEED");
  return fallback;
}

/// The named profile when one was given on the command line, otherwise the
/// rig's own noise section.
NoiseModel resolve_noise(const Rig& rig, const std::string& profile, const std::optional<std::uint64_t>& seed_flag) {
  const std::uint64_t seed = resolve_seed(seed_flag, rig.noise.seed);
  if (profile.empty()) {
    NoiseModel n = rig.noise;
    n.seed = seed;
    return n;
  }
  return noise_profile(profile, seed);
}

std::string pattern_section_text(const NamedPatternSpec& named) {
  const auto& spec = named.spec;
  std::ostringstream os;
  os << "[" << named.name << "]\n"
     << "kind = " << to_string(spec.kind) << "\n"
     << "resolution = " << spec.resolution << "\n"
     << "channels = " << spec.channels << "\n";
  if (named.assign_channels) os << "assign_channels = 1\n";
  auto triple = [](const std::array<double, 3>& v) {
    return format_double(v[0]) + " " + format_double(v[1]) + " " + format_double(v[2]);
  };
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, RandomParams>) {
          os << "seed = " << p.seed << "\nknots = " << p.knots << "\n";
        } else if constexpr (std::is_same_v<P, LissajousParams>) {
          os << "frequencies = " << triple(p.frequencies) << "\nphases = " << triple(p.phases) << "\n";
        } else if constexpr (std::is_same_v<P, StairsParams>) {
          os << "frequencies = " << triple(p.frequencies) << "\n";
        } else if constexpr (std::is_same_v<P, SpiralParams>) {
          os << "ramp_slope = " << format_double(p.ramp_slope) << "\ncarrier_frequency = "
             << format_double(p.carrier_frequency) << "\nmodulation_frequency = "
             << format_double(p.modulation_frequency) << "\namplitude_min = " << format_double(p.amplitude_min)
             << "\namplitude_max = " << format_double(p.amplitude_max) << "\n";
        } else if constexpr (std::is_same_v<P, GraycodeParams>) {
          os << "stripe_width = " << p.stripe_width << "\n";
        }
      },
      spec.params);
  return os.str();
}

/// All planes of a pattern set stacked as channels of one pattern, so that a
/// gray code's confusion matrix compares whole codewords.
Pattern stacked(const std::vector<Pattern>& set) {
  if (set.size() == 1) return set.front();
  Pattern out;
  out.spec = set.front().spec;
  int total = 0;
  for (const auto& p : set) total += p.channels();
  out.spec.channels = total;
  const int n = set.front().resolution();
  out.values.assign(static_cast<std::size_t>(n) * total, 0.0);
  for (int i = 0; i < n; ++i) {
    int k = 0;
    for (const auto& p : set) {
      for (int c = 0; c < p.channels(); ++c) out.at(i, k++) = p.at(i, c);
    }
  }
  return out;
}

void write_pattern_image(const fs::path& path, const Pattern& p, int rows = 64) {
  const int n = p.resolution();
  if (p.channels() == 3) {
    std::vector<double> rgb;
    rgb.reserve(static_cast<std::size_t>(n) * rows * 3);
    for (int r = 0; r < rows; ++r) {
      for (int i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) rgb.push_back(p.at(i, c));
      }
    }
    write_ppm(path.string() + ".ppm", rgb, n, rows);
  } else {
    std::vector<double> g;
    g.reserve(static_cast<std::size_t>(n) * rows);
    for (int r = 0; r < rows; ++r) {
      for (int i = 0; i < n; ++i) g.push_back(p.at(i, 0));
    }
    write_pgm(path.string() + ".pgm", g, n, rows);
  }
}

void write_confusion(const fs::path& dir, const Pattern& p) {
  const auto m = confusion_matrix(p);
  write_pgm(dir / "confusion.pgm", m.entries, m.size, m.size, 1.0);
  write_file(dir / "confusion.csv", confusion_csv(m));
}

std::vector<Pattern> load_pattern_dir(const fs::path& dir, const std::string& name) {
  const fs::path spec = dir / name / kSpecName;
  require_file(spec, "pattern spec for '" + name + "'");
  const auto specs = read_pattern_specs(spec);
  return build_patterns(resolve_pattern(name, specs));
}

// ---------------------------------------------------------------- frame directories

std::vector<double> plane_numbers(const Plane& p) {
  return {p.point.x(), p.point.y(), p.point.z(), p.normal.x(), p.normal.y(), p.normal.z()};
}

Plane numbers_plane(const std::vector<double>& v, const std::string& what) {
  if (v.size() != 6) throw FormatError(what + ": plane needs 6 numbers");
  return {Vec3(v[0], v[1], v[2]), Vec3(v[3], v[4], v[5])};
}

std::vector<double> camera_numbers(const CameraModel& c) {
  return {static_cast<double>(c.width), static_cast<double>(c.height), c.fx, c.fy, c.cx, c.cy, c.k1};
}

CameraModel numbers_camera(const std::vector<double>& v, const std::string& what) {
  if (v.size() != 7) throw FormatError(what + ": camera needs 7 numbers");
  CameraModel c{static_cast<int>(v[0]), static_cast<int>(v[1]), v[2], v[3], v[4], v[5], v[6]};
  c.validate();
  return c;
}

Manifest start_manifest(const std::string& kind, const CameraModel& cam, const CaptureFrame& first,
                        std::uint64_t seed) {
  Manifest m;
  m.kind = kind;
  m.width = cam.width;
  m.height = cam.height;
  m.seed = seed;
  m.camera = camera_numbers(cam);
  for (std::size_t i = 0; i < first.pattern_ids.size(); ++i) {
    m.pattern_ids.push_back(first.pattern_ids[i]);
    m.pattern_channels.push_back(first.images[i].channels());
  }
  return m;
}

void write_capture(const fs::path& dir, std::size_t k, const CaptureFrame& frame) {
  for (std::size_t i = 0; i < frame.images.size(); ++i) {
    const auto& img = frame.images[i];
    for (int c = 0; c < img.channels(); ++c) {
      write_pfm(dir / Manifest::frame_file(k, frame.pattern_ids[i], c), extract_channel(img, c));
    }
  }
}

CaptureFrame read_capture(const fs::path& dir, const Manifest& m, std::size_t k) {
  CaptureFrame frame;
  for (std::size_t i = 0; i < m.pattern_ids.size(); ++i) {
    std::vector<Image<float>> planes;
    for (int c = 0; c < m.pattern_channels[i]; ++c) {
      const fs::path p = dir / Manifest::frame_file(k, m.pattern_ids[i], c);
      require_file(p, "frame image");
      auto img = read_pfm(p);
      if (img.width() != m.width || img.height() != m.height || img.channels() != 1) {
        throw DimensionMismatch(p.string() + ": image is " + std::to_string(img.width()) + "x" +
                                std::to_string(img.height()) + "x" + std::to_string(img.channels()) +
                                ", manifest says " + std::to_string(m.width) + "x" + std::to_string(m.height) + "x1");
      }
      planes.push_back(std::move(img));
    }
    frame.images.push_back(merge_channels(planes));
    frame.pattern_ids.push_back(m.pattern_ids[i]);
  }
  return frame;
}

std::string extra_value(const Manifest& m, const std::string& key, const std::string& fallback) {
  for (const auto& [k, v] : m.extra) {
    if (k == key) return v;
  }
  return fallback;
}

Image<float> depth_image(const DepthMap& dm) {
  Image<float> img(dm.width, dm.height, 1);
  for (std::size_t i = 0; i < dm.size(); ++i) img.values()[i] = static_cast<float>(dm.depth[i]);
  return img;
}

std::vector<double> mask_values(const DepthMap& dm) {
  std::vector<double> v(dm.size());
  for (std::size_t i = 0; i < dm.size(); ++i) v[i] = dm.valid[i] ? 1.0 : 0.0;
  return v;
}

std::string frame_name(const char* prefix, std::size_t k, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%05zu.%s", prefix, k, ext);
  return buf;
}

DepthMap read_depth(const fs::path& dir, std::size_t k) {
  const fs::path dp = dir / frame_name("depth", k, "pfm");
  const fs::path mp = dir / frame_name("mask", k, "pgm");
  require_file(dp, "depth map");
  require_file(mp, "validity mask");
  const auto img = read_pfm(dp);
  int w = 0;
  int h = 0;
  const auto mask = read_pgm(mp, w, h);
  if (w != img.width() || h != img.height() || img.channels() != 1) {
    throw DimensionMismatch(mp.string() + ": mask size differs from " + dp.string());
  }
  DepthMap dm(img.width(), img.height());
  for (std::size_t i = 0; i < dm.size(); ++i) {
    dm.depth[i] = img.values()[i];
    dm.valid[i] = mask[i] != 0;
  }
  return dm;
}

void write_depth(const fs::path& dir, std::size_t k, const DepthMap& dm) {
  write_pfm(dir / frame_name("depth", k, "pfm"), depth_image(dm));
  write_pgm(dir / frame_name("mask", k, "pgm"), mask_values(dm), dm.width, dm.height);
}

// ---------------------------------------------------------------- scenes

/// plane:DEPTH[:TILT], sphere:DEPTH:RADIUS, bumps:DEPTH:AMPLITUDE
Scene parse_scene(const std::string& text, double offset) {
  const auto parts = split_words(text, ':');
  auto fail = [&]() -> Scene {
    throw UsageError("scene '" + text + "' not understood (expected plane:0.75m[:5deg], sphere:0.75m:2cm or " +
                     "bumps:0.75m:1mm)");
  };
  if (parts.empty()) return fail();
  if (parts[0] == "plane" && (parts.size() == 2 || parts.size() == 3)) {
    const double depth = parse_length(parts[1], "scene depth") + offset;
    const double tilt = parts.size() == 3 ? parse_angle(parts[2], "scene tilt") : 0.0;
    const Vec3 normal(-std::sin(tilt), 0.0, -std::cos(tilt));
    return PlaneScene{Plane{Vec3(0, 0, depth), normal}, 0.25, 0.9};
  }
  if (parts[0] == "sphere" && parts.size() == 3) {
    const double depth = parse_length(parts[1], "scene depth") + offset;
    const double radius = parse_length(parts[2], "sphere radius");
    return SphereScene{Vec3(0, 0, depth + radius), radius, 0.9};
  }
  if (parts[0] == "bumps" && parts.size() == 3) {
    const double depth = parse_length(parts[1], "scene depth") + offset;
    const double amp = parse_length(parts[2], "bump amplitude");
    HeightfieldScene h;
    h.x0 = h.y0 = -0.1;
    h.x1 = h.y1 = 0.1;
    h.nx = h.ny = 65;
    for (int j = 0; j < h.ny; ++j) {
      for (int i = 0; i < h.nx; ++i) {
        const double u = h.x0 + (h.x1 - h.x0) * i / (h.nx - 1);
        const double v = h.y0 + (h.y1 - h.y0) * j / (h.ny - 1);
        h.depth.push_back(depth + amp * std::sin(2 * std::numbers::pi * u / 0.02) * std::sin(2 * std::numbers::pi * v / 0.02));
        h.albedo.push_back(0.9);
      }
    }
    return h;
  }
  return fail();
}

std::array<int, 4> parse_crop(const std::string& text) {
  const auto parts = split_words(text, ',');
  if (parts.size() != 4) throw UsageError("--crop expects x0,y0,x1,y1, got '" + text + "'");
  std::array<int, 4> v{};
  for (int i = 0; i < 4; ++i) v[i] = static_cast<int>(parse_integer(parts[i], "--crop"));
  if (v[2] <= v[0] || v[3] <= v[1]) throw UsageError("--crop: need x0 < x1 and y0 < y1");
  return v;
}

SmoothingPolicy parse_smoothing(const std::string& text) {
  if (text == "auto") return SmoothingPolicy::automatic();
  const double s = parse_double(text, "--smoothing");
  if (!(s >= 0.0)) throw UsageError("--smoothing must be >= 0 or 'auto'");
  return SmoothingPolicy::fixed(s);
}

int check_workers(int w) {
  if (w < 0) throw UsageError("--workers must be >= 0 (0 = all cores)");
  return w;
}

void print_timing(const std::string& label, double seconds, double pixels_per_second) {
  std::cout << label << ": " << format_double(seconds) << " s, " << static_cast<long long>(pixels_per_second)
            << " pixels/s\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lookup3d: structured light scanning by per-pixel color lookup"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "lookup3d 1.0");

  // gen-patterns
  std::string gp_spec;
  std::string gp_out;
  auto* gen = app.add_subcommand("gen-patterns", "Write pattern images, CSVs and confusion matrices");
  gen->add_option("spec-file", gp_spec, "Pattern spec file")->required();
  gen->add_option("--out", gp_out, "Output directory")->required();

  // analyze-patterns
  std::string ap_spec;
  std::string ap_out;
  int ap_band = 1;
  auto* analyze = app.add_subcommand("analyze-patterns", "Minimum separation and confusion summary per pattern");
  analyze->add_option("spec-file", ap_spec, "Pattern spec file")->required();
  analyze->add_option("--out", ap_out, "Report CSV")->required();
  analyze->add_option("--band", ap_band, "Exclusion band in samples");

  // simulate-sweep
  std::string ss_rig;
  std::string ss_patterns;
  std::string ss_range;
  std::string ss_noise;
  std::string ss_out;
  std::string ss_pattern;
  std::optional<std::uint64_t> ss_seed;
  int ss_workers = 0;
  auto* sweep = app.add_subcommand("simulate-sweep", "Render a calibration sweep of the board");
  sweep->add_option("rig-file", ss_rig, "Rig description")->required();
  sweep->add_option("--patterns", ss_patterns, "Directory written by gen-patterns")->required();
  sweep->add_option("--range", ss_range, "start:end:step with units, e.g. 725mm:775mm:150um");
  sweep->add_option("--noise-profile", ss_noise, "none, moderate or high (default: the rig's noise)");
  sweep->add_option("--pattern", ss_pattern, "Pattern name (default: the rig's pattern)");
  sweep->add_option("--seed", ss_seed, "Noise seed");
  sweep->add_option("--workers", ss_workers, "Worker threads (0 = all cores)");
  sweep->add_option("--out", ss_out, "Output directory")->required();

  // calibrate
  std::string cb_sweep;
  std::string cb_smoothing;
  std::string cb_out;
  bool cb_bayer = false;
  int cb_workers = 0;
  auto* calibrate = app.add_subcommand("calibrate", "Fit the per-pixel lookup table from a sweep");
  calibrate->add_option("sweep-dir", cb_sweep, "Directory written by simulate-sweep")->required();
  calibrate->add_option("--smoothing", cb_smoothing, "Residual target, or 'auto' (default: auto for noisy sweeps)");
  calibrate->add_flag("--bayer", cb_bayer, "Mosaic and demosaic color frames before fitting");
  calibrate->add_option("--workers", cb_workers, "Worker threads (0 = all cores)");
  calibrate->add_option("--out", cb_out, "Lookup table file")->required();

  // simulate-scan
  std::string sc_rig;
  std::string sc_scene;
  std::string sc_patterns;
  std::string sc_noise;
  std::string sc_out;
  std::string sc_pattern;
  std::string sc_motion = "0m";
  std::optional<std::uint64_t> sc_seed;
  int sc_frames = 1;
  int sc_workers = 0;
  auto* scan = app.add_subcommand("simulate-scan", "Render scan frames of a test scene");
  scan->add_option("rig-file", sc_rig, "Rig description")->required();
  scan->add_option("--scene", sc_scene, "plane:DEPTH[:TILT], sphere:DEPTH:RADIUS or bumps:DEPTH:AMPLITUDE")->required();
  scan->add_option("--lut-patterns", sc_patterns, "Pattern directory used for calibration")->required();
  scan->add_option("--pattern", sc_pattern, "Pattern name (default: the rig's pattern)");
  scan->add_option("--frames", sc_frames, "Number of frames");
  scan->add_option("--motion", sc_motion, "Scene displacement along z per frame, with units");
  scan->add_option("--noise-profile", sc_noise, "none, moderate or high (default: the rig's noise)");
  scan->add_option("--seed", sc_seed, "Noise seed");
  scan->add_option("--workers", sc_workers, "Worker threads (0 = all cores)");
  scan->add_option("--out", sc_out, "Output directory")->required();

  // reconstruct
  std::string rc_lut;
  std::string rc_scan;
  std::string rc_step = "10um";
  double rc_reject = kDefaultResidualReject;
  int rc_workers = 0;
  bool rc_ascii = false;
  bool rc_refine = false;
  bool rc_bayer = false;
  std::string rc_out;
  auto* recon = app.add_subcommand("reconstruct", "Depth maps and point clouds from scan frames");
  recon->add_option("lut", rc_lut, "Lookup table file")->required();
  recon->add_option("scan-dir", rc_scan, "Directory written by simulate-scan")->required();
  recon->add_option("--step", rc_step, "Depth search step with units");
  recon->add_option("--residual-reject", rc_reject, "Reject pixels whose color residual exceeds this");
  recon->add_option("--workers", rc_workers, "Worker threads (0 = all cores)");
  recon->add_flag("--ascii", rc_ascii, "Write ASCII PLY instead of binary");
  recon->add_flag("--refine", rc_refine, "Parabolic refinement of the grid minimum");
  recon->add_flag("--bayer", rc_bayer, "Mosaic and demosaic color frames first");
  recon->add_option("--out", rc_out, "Output directory")->required();

  // filter-sequence
  std::string fs_in;
  std::string fs_out;
  std::string fs_jump = "1cm";
  auto* filter = app.add_subcommand("filter-sequence", "Three-frame temporal filter of depth maps");
  filter->add_option("depth-dir", fs_in, "Directory written by reconstruct")->required();
  filter->add_option("--max-jump", fs_jump, "Largest accepted frame-to-frame depth change");
  filter->add_option("--out", fs_out, "Output directory")->required();

  // evaluate-plane
  std::string ep_cloud;
  std::string ep_crop;
  std::string ep_out;
  auto* evalp = app.add_subcommand("evaluate-plane", "Plane fit statistics of a point cloud");
  evalp->add_option("cloud", ep_cloud, "PLY point cloud")->required();
  evalp->add_option("--crop", ep_crop, "Source pixel region x0,y0,x1,y1 (half-open)")->required();
  evalp->add_option("--out", ep_out, "Report CSV")->required();

  // compare-patterns
  std::string cp_spec;
  std::string cp_rig;
  std::string cp_out;
  std::string cp_noise = "moderate";
  std::string cp_depth;
  std::optional<std::uint64_t> cp_seed;
  int cp_margin = 8;
  int cp_workers = 0;
  auto* compare = app.add_subcommand("compare-patterns", "End-to-end plane precision per pattern");
  compare->add_option("spec-file", cp_spec, "Pattern spec file")->required();
  compare->add_option("rig-file", cp_rig, "Rig description")->required();
  compare->add_option("--noise-profile", cp_noise, "none, moderate or high");
  compare->add_option("--depth", cp_depth, "Plane depth with units (default: between two sweep stops)");
  compare->add_option("--crop-margin", cp_margin, "Pixels ignored on each side for the plane fit");
  compare->add_option("--seed", cp_seed, "Noise seed");
  compare->add_option("--workers", cp_workers, "Worker threads (0 = all cores)");
  compare->add_option("--out", cp_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*gen) {
      require_file(gp_spec, "pattern spec file");
      const auto specs = read_pattern_specs(gp_spec);
      for (const auto& named : specs) {
        const fs::path dir = fs::path(gp_out) / named.name;
        const auto set = build_patterns(named);
        write_file(dir / kSpecName, pattern_section_text(named));
        for (std::size_t k = 0; k < set.size(); ++k) {
          const std::string stem = "pattern_" + std::to_string(k);
          write_file(dir / (stem + ".csv"), pattern_csv(set[k]));
          write_pattern_image(dir / stem, set[k]);
        }
        write_confusion(dir, stacked(set));
        std::cout << named.name << ": " << set.size() << " pattern(s)\n";
      }
    } else if (*analyze) {
      require_file(ap_spec, "pattern spec file");
      const auto specs = read_pattern_specs(ap_spec);
      std::ostringstream os;
      os << "pattern,kind,resolution,channels,planes,min_separation,mean_abs_difference\n";
      for (const auto& named : specs) {
        const auto set = build_patterns(named);
        const Pattern code = stacked(set);
        if (ap_band < 1 || ap_band >= code.resolution()) {
          throw UsageError("--band must be in [1, " + std::to_string(code.resolution()) + ")");
        }
        double activity = 0.0;
        for (int c = 0; c < code.channels(); ++c) activity += mean_abs_difference(code, c);
        os << named.name << "," << to_string(named.spec.kind) << "," << code.resolution() << ","
           << named.spec.channels << "," << set.size() << "," << format_double(min_separation(code, ap_band)) << ","
           << format_double(activity / code.channels()) << "\n";
      }
      write_file(ap_out, os.str());
    } else if (*sweep) {
      require_file(ss_rig, "rig file");
      require_dir(ss_patterns, "pattern directory");
      check_workers(ss_workers);
      Rig rig = read_rig(ss_rig);
      if (!ss_range.empty()) rig.stage = parse_stage_range(ss_range, "--range");
      const NoiseModel noise = resolve_noise(rig, ss_noise, ss_seed);
      const std::uint64_t seed = noise.seed;
      const std::string name = ss_pattern.empty() ? rig.pattern : ss_pattern;
      const auto patterns = load_pattern_dir(ss_patterns, name);
      SweepOptions so = rig.sweep;
      so.workers = ss_workers;
      const SweepPlan plan = plan_sweep(rig.camera, rig.stage, so);
      const fs::path out(ss_out);
      Manifest m;
      render_sweep(plan, rig.camera, rig.projector(), patterns, noise, so, [&](std::size_t k, CaptureFrame&& f) {
        if (k == 0) m = start_manifest("sweep", rig.camera, f, seed);
        write_capture(out, k, f);
        ManifestFrame mf;
        mf.position = plan.reported[k].stage_position;
        mf.in_view = plan.reported[k].in_view;
        mf.plane = plane_numbers(plan.reported[k].plane);
        mf.truth = plane_numbers(plan.truth[k].plane);
        m.frames.push_back(std::move(mf));
      });
      m.extra = {{"pattern", name}, {"noisy", noise.noiseless() ? "0" : "1"}};
      write_manifest(out / kManifestName, m);
      std::cout << "sweep: " << m.frames.size() << " stops written to " << out.string() << "\n";
    } else if (*calibrate) {
      require_dir(cb_sweep, "sweep directory");
      check_workers(cb_workers);
      const fs::path dir(cb_sweep);
      require_file(dir / kManifestName, "sweep manifest");
      const Manifest m = read_manifest(dir / kManifestName);
      if (m.kind != "sweep") throw UsageError(dir.string() + " holds a '" + m.kind + "' capture, not a sweep");
      const CameraModel cam = numbers_camera(m.camera, "sweep manifest");
      const bool noisy = extra_value(m, "noisy", "0") != "0";
      CalibrationOptions options;
      options.fit.smoothing = !cb_smoothing.empty() ? parse_smoothing(cb_smoothing)
                              : noisy               ? SmoothingPolicy::automatic()
                                                    : SmoothingPolicy::interpolate();
      options.fit.workers = cb_workers;
      options.bayer = cb_bayer;
      std::vector<BoardPose> poses;
      for (std::size_t k = 0; k < m.frames.size(); ++k) {
        BoardPose p;
        p.stage_position = m.frames[k].position;
        p.in_view = m.frames[k].in_view;
        p.plane = numbers_plane(m.frames[k].plane, "sweep manifest frame " + std::to_string(k));
        poses.push_back(p);
      }
      Calibrator cal(cam, poses, options);
      for (std::size_t k = 0; k < m.frames.size(); ++k) cal.add(k, read_capture(dir, m, k));
      const auto result = std::move(cal).finish();
      const fs::path out(cb_out);
      save_lut(result.lut, out);
      fs::path report = out;
      report.replace_extension(".fit.csv");
      write_file(report, result.report.csv());
      std::cout << "calibrate: " << result.lut.valid_count() << "/" << result.lut.pixel_count()
                << " valid rays, trajectory residual " << format_double(result.trajectory.residual_rms) << " m\n";
    } else if (*scan) {
      require_file(sc_rig, "rig file");
      require_dir(sc_patterns, "pattern directory");
      check_workers(sc_workers);
      if (sc_frames < 1) throw UsageError("--frames must be >= 1");
      const double motion = parse_length(sc_motion, "--motion");
      const Rig rig = read_rig(sc_rig);
      parse_scene(sc_scene, 0.0);
      const NoiseModel noise = resolve_noise(rig, sc_noise, sc_seed);
      const std::uint64_t seed = noise.seed;
      const std::string name = sc_pattern.empty() ? rig.pattern : sc_pattern;
      const auto patterns = load_pattern_dir(sc_patterns, name);
      const fs::path out(sc_out);
      Manifest m;
      for (int f = 0; f < sc_frames; ++f) {
        const Scene scene = parse_scene(sc_scene, motion * f);
        const CaptureFrame frame = simulate_scan_frame(rig, patterns, scene, noise, static_cast<std::uint64_t>(f),
                                                       sc_workers);
        if (f == 0) m = start_manifest("scan", rig.camera, frame, seed);
        write_capture(out, static_cast<std::size_t>(f), frame);
        write_depth(out, static_cast<std::size_t>(f), truth_depth(scene, rig.camera));
        ManifestFrame mf;
        mf.position = f;
        m.frames.push_back(mf);
      }
      m.extra = {{"pattern", name}, {"scene", sc_scene}, {"motion", sc_motion}, {"noisy", noise.noiseless() ? "0" : "1"}};
      write_manifest(out / kManifestName, m);
      std::cout << "scan: " << sc_frames << " frame(s) written to " << out.string() << "\n";
    } else if (*recon) {
      require_file(rc_lut, "lookup table");
      require_dir(rc_scan, "scan directory");
      check_workers(rc_workers);
      ReconstructOptions options;
      options.step = parse_length(rc_step, "--step");
      if (!(options.step > 0.0)) throw UsageError("--step must be positive");
      if (!(rc_reject > 0.0)) throw UsageError("--residual-reject must be positive");
      options.residual_reject = rc_reject;
      options.workers = rc_workers;
      options.refine = rc_refine;
      const fs::path dir(rc_scan);
      require_file(dir / kManifestName, "scan manifest");
      const Manifest m = read_manifest(dir / kManifestName);
      const RayLUT lut = load_lut(rc_lut);
      int scan_channels = 0;
      for (std::size_t i = 0; i < m.pattern_ids.size(); ++i) {
        if (m.pattern_ids[i] != kWhiteId && m.pattern_ids[i] != kDarkId) scan_channels += m.pattern_channels[i];
      }
      if (scan_channels != lut.channels()) {
        throw DimensionMismatch("reconstruct: lookup table has " + std::to_string(lut.channels()) +
                                " channels but the scan has " + std::to_string(scan_channels));
      }
      if (m.width != lut.width() || m.height != lut.height()) {
        throw DimensionMismatch("reconstruct: lookup table is " + std::to_string(lut.width()) + "x" +
                                std::to_string(lut.height()) + " but the scan is " + std::to_string(m.width) + "x" +
                                std::to_string(m.height));
      }
      const fs::path out(rc_out);
      std::ostringstream summary;
      summary << "frame,valid_pixels,rms_error_m,mean_error_m,max_abs_error_m\n";
      for (std::size_t k = 0; k < m.frames.size(); ++k) {
        CaptureFrame frame = read_capture(dir, m, k);
        if (rc_bayer) apply_bayer(frame);
        const NormalizedStack stack = normalize_stack(frame);
        const auto result = reconstruct_frame(lut, stack, options);
        const auto& dm = result.depth;
        write_depth(out, k, dm);
        Image<float> residual(dm.width, dm.height, 1);
        for (std::size_t i = 0; i < dm.size(); ++i) residual.values()[i] = static_cast<float>(dm.residual[i]);
        write_pfm(out / frame_name("residual", k, "pfm"), residual);
        const auto cloud = depth_to_points(dm, lut.camera());
        write_ply(out / frame_name("cloud", k, "ply"), to_cloud_points(cloud),
                  rc_ascii ? PlyEncoding::ascii : PlyEncoding::binary_little_endian);
        summary << k << "," << dm.valid_count();
        const fs::path truth = dir / frame_name("depth", k, "pfm");
        if (fs::is_regular_file(truth)) {
          const auto stats = depth_error_stats(dm, read_depth(dir, k));
          summary << "," << format_double(stats.rms) << "," << format_double(stats.mean) << ","
                  << format_double(stats.max_abs);
        } else {
          summary << ",,,";
        }
        summary << "\n";
        print_timing("frame " + std::to_string(k), result.seconds, result.pixels_per_second);
      }
      write_file(out / "summary.csv", summary.str());
    } else if (*filter) {
      require_dir(fs_in, "depth directory");
      const double jump = parse_length(fs_jump, "--max-jump");
      const fs::path dir(fs_in);
      std::vector<DepthMap> seq;
      while (fs::is_regular_file(dir / frame_name("depth", seq.size(), "pfm"))) seq.push_back(read_depth(dir, seq.size()));
      if (seq.size() < 3) {
        throw UsageError(dir.string() + ": need at least 3 depth maps (depth_00000.pfm ...), found " +
                         std::to_string(seq.size()));
      }
      const auto filtered = temporal_filter(seq, jump);
      const fs::path out(fs_out);
      std::ostringstream flags;
      flags << "frame,passthrough,valid_pixels\n";
      for (std::size_t k = 0; k < filtered.frames.size(); ++k) {
        write_depth(out, k, filtered.frames[k]);
        flags << k << "," << (filtered.passthrough[k] ? 1 : 0) << "," << filtered.frames[k].valid_count() << "\n";
      }
      write_file(out / "frames.csv", flags.str());
    } else if (*evalp) {
      require_file(ep_cloud, "point cloud");
      const auto c = parse_crop(ep_crop);
      const auto cloud = from_cloud_points(read_ply(ep_cloud));
      const auto report = plane_pca(cloud, CropRegion{c[0], c[1], c[2], c[3]});
      std::ostringstream os;
      os << "points,sigma_m,max_abs_m,px,py,pz,nx,ny,nz\n"
         << report.count << "," << format_double(report.sigma) << "," << format_double(report.max_abs);
      for (double v : plane_numbers(report.plane)) os << "," << format_double(v);
      os << "\n";
      const fs::path out(ep_out);
      write_file(out, os.str());
      fs::path hist = out;
      hist.replace_extension(".hist.txt");
      write_file(hist, report.histogram.two_column());
      std::cout << "plane: " << report.count << " points, sigma " << format_double(report.sigma * 1e6) << " um\n";
    } else if (*compare) {
      require_file(cp_spec, "pattern spec file");
      require_file(cp_rig, "rig file");
      check_workers(cp_workers);
      const auto specs = read_pattern_specs(cp_spec);
      const Rig rig = read_rig(cp_rig);
      ComparisonOptions options;
      options.noise = resolve_noise(rig, cp_noise, cp_seed);
      options.smoothing = options.noise.noiseless() ? SmoothingPolicy::interpolate() : SmoothingPolicy::automatic();
      options.scan_depth = cp_depth.empty() ? rig.stage.start + 0.5 * (rig.stage.end - rig.stage.start) +
                                                  0.5 * rig.stage.step
                                            : parse_length(cp_depth, "--depth");
      options.crop_margin = cp_margin;
      options.workers = cp_workers;
      if (cp_margin < 0 || 2 * cp_margin >= std::min(rig.camera.width, rig.camera.height)) {
        throw UsageError("--crop-margin leaves no pixels");
      }
      const auto result = compare_patterns(specs, rig, options);
      const fs::path out(cp_out);
      write_file(out / "comparison.csv", comparison_csv(result.rows));
      for (std::size_t i = 0; i < specs.size(); ++i) {
        const fs::path dir = out / specs[i].name;
        write_pattern_image(dir / "pattern", result.patterns[i].front());
        write_confusion(dir, stacked(result.patterns[i]));
        const auto& r = result.rows[i];
        std::cout << r.name << ": sigma " << (std::isfinite(r.sigma) ? format_double(r.sigma * 1e6) : "nan")
                  << " um" << (r.error.empty() ? "" : " (" + r.error + ")") << "\n";
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "lookup3d: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
