#pragma once

// File formats. Binary formats are little-endian; text formats print doubles
// in shortest round-trip form so values reload bit-exactly.
//
//   PFM       "Pf" (1 channel) / "PF" (3 channels), scale -1 (little-endian),
//             rows stored bottom to top.
//   PGM/PPM   8-bit binary (P5 / P6), for visualization only.
//   PLY       ascii or binary_little_endian; vertex properties
//             float x, y, z, residual and int px, py (source pixel).
//   key-value text: "key = value" lines, '#' comments, order preserved.

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "lookup3d/core.hpp"

namespace lookup3d {

static_assert(std::endian::native == std::endian::little, "lookup3d assumes a little-endian host");

// ---------------------------------------------------------------- numbers

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text, std::string_view what) {
  double v = 0.0;
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  if (!text.empty() && text.front() == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) {
    throw FormatError(std::string(what) + ": cannot parse number '" + std::string(text) + "'");
  }
  return v;
}

inline long long parse_integer(std::string_view text, std::string_view what) {
  long long v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw FormatError(std::string(what) + ": cannot parse integer '" + std::string(text) + "'");
  }
  return v;
}

inline std::vector<std::string> split_words(std::string_view text, char sep = ' ') {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const bool is_sep = sep == ' ' ? (ch == ' ' || ch == '\t') : ch == sep;
    if (is_sep) {
      if (sep != ' ' || !cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (sep != ' ' || !cur.empty()) out.push_back(cur);
  return out;
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// ---------------------------------------------------------------- files

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for '" + path.string() + "'");
}

namespace detail {

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

/// Bounds-checked little-endian reader over a byte buffer.
class ByteReader {
 public:
  ByteReader(std::string_view bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename T>
  void read_into(T* dst, std::size_t count) {
    need(count * sizeof(T));
    std::memcpy(dst, bytes_.data() + pos_, count * sizeof(T));
    pos_ += count * sizeof(T);
  }
  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  /// Reads up to the next '\n' (exclusive).
  std::string line() {
    const auto end = bytes_.find('\n', pos_);
    if (end == std::string_view::npos) throw FormatError(what_ + ": truncated header");
    std::string s(bytes_.substr(pos_, end - pos_));
    pos_ = end + 1;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(what_ + ": truncated file (need " + std::to_string(n) + " bytes at offset " +
                        std::to_string(pos_) + ", " + std::to_string(bytes_.size() - pos_) + " left)");
    }
  }
  std::string_view bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// ---------------------------------------------------------------- format registry

enum class PayloadKind { lut, pfm_image, ply_cloud, manifest };

struct FormatHeader {
  std::string magic;
  int version = 1;
  PayloadKind kind = PayloadKind::lut;
};

inline constexpr std::string_view kLutMagic{"LU3DLUT\0", 8};
inline constexpr int kLutVersion = 1;
inline constexpr std::string_view kManifestMagic = "lookup3d-manifest";
inline constexpr int kManifestVersion = 1;

/// Identifies a file by its leading bytes.
inline FormatHeader detect_format(std::string_view bytes) {
  if (bytes.substr(0, kLutMagic.size()) == kLutMagic) {
    if (bytes.size() < kLutMagic.size() + 4) throw FormatError("lut: truncated header");
    std::uint32_t version = 0;
    std::memcpy(&version, bytes.data() + kLutMagic.size(), 4);
    return {std::string(kLutMagic), static_cast<int>(version), PayloadKind::lut};
  }
  if (bytes.substr(0, 3) == "Pf\n" || bytes.substr(0, 3) == "PF\n") {
    return {std::string(bytes.substr(0, 2)), 1, PayloadKind::pfm_image};
  }
  if (bytes.substr(0, 4) == "ply\n") return {"ply", 1, PayloadKind::ply_cloud};
  if (bytes.substr(0, kManifestMagic.size()) == kManifestMagic) {
    const auto eol = bytes.find('\n');
    const auto words = split_words(bytes.substr(0, eol));
    const int version = words.size() > 1 ? static_cast<int>(parse_integer(words[1], "manifest version")) : 0;
    return {std::string(kManifestMagic), version, PayloadKind::manifest};
  }
  throw FormatError("unrecognized file format");
}

// ---------------------------------------------------------------- PFM

inline std::string encode_pfm(const Image<float>& image) {
  if (image.channels() != 1 && image.channels() != 3) {
    throw InvalidArgument("write_pfm: images must have 1 or 3 channels");
  }
  for (float v : image.values()) {
    if (!std::isfinite(v)) throw InvalidArgument("write_pfm: image contains a non-finite value");
  }
  std::string out = image.channels() == 1 ? "Pf\n" : "PF\n";
  out += std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n-1.0\n";
  const std::size_t row = static_cast<std::size_t>(image.width()) * image.channels();
  out.reserve(out.size() + image.size() * sizeof(float));
  for (int y = image.height() - 1; y >= 0; --y) {
    out.append(reinterpret_cast<const char*>(image.data() + static_cast<std::size_t>(y) * row),
               row * sizeof(float));
  }
  return out;
}

inline Image<float> decode_pfm(std::string_view bytes, const std::string& what = "pfm") {
  detail::ByteReader r(bytes, what);
  const std::string kind = trim(r.line());
  int channels = 0;
  if (kind == "Pf") {
    channels = 1;
  } else if (kind == "PF") {
    channels = 3;
  } else {
    throw FormatError(what + ": bad magic '" + kind + "'");
  }
  const auto dims = split_words(trim(r.line()));
  if (dims.size() != 2) throw FormatError(what + ": bad dimension line");
  const auto w = parse_integer(dims[0], what);
  const auto h = parse_integer(dims[1], what);
  if (w <= 0 || h <= 0 || w > (1 << 20) || h > (1 << 20)) throw FormatError(what + ": bad dimensions");
  const double scale = parse_double(trim(r.line()), what);
  if (!(scale < 0.0)) throw FormatError(what + ": only little-endian PFM (negative scale) is supported");
  Image<float> img(static_cast<int>(w), static_cast<int>(h), channels);
  const std::size_t row = static_cast<std::size_t>(w) * channels;
  if (r.remaining() != row * h * sizeof(float)) {
    throw FormatError(what + ": payload size " + std::to_string(r.remaining()) + " does not match header " +
                      std::to_string(w) + "x" + std::to_string(h) + "x" + std::to_string(channels));
  }
  for (long long y = h - 1; y >= 0; --y) {
    r.read_into(img.data() + static_cast<std::size_t>(y) * row, row);
  }
  return img;
}

inline void write_pfm(const std::filesystem::path& path, const Image<float>& image) {
  write_file(path, encode_pfm(image));
}
inline Image<float> read_pfm(const std::filesystem::path& path) {
  return decode_pfm(read_file(path), path.string());
}

// ---------------------------------------------------------------- PGM / PPM

/// 8-bit grayscale; values are scaled by 255 / max_value and clamped.
inline void write_pgm(const std::filesystem::path& path, const std::vector<double>& values, int width,
                      int height, double max_value = 1.0) {
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  for (double v : values) {
    const double s = max_value > 0.0 ? v / max_value : 0.0;
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(s, 0.0, 1.0) * 255.0))));
  }
  write_file(path, out);
}

/// 8-bit RGB; `rgb` holds width*height*3 values in [0, 1].
inline void write_ppm(const std::filesystem::path& path, const std::vector<double>& rgb, int width, int height) {
  std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  for (double v : rgb) {
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  }
  write_file(path, out);
}

/// Reads an 8-bit P5 image as values in [0, 255].
inline std::vector<std::uint8_t> read_pgm(const std::filesystem::path& path, int& width, int& height) {
  const std::string bytes = read_file(path);
  std::istringstream in(bytes);
  std::string magic;
  int maxval = 0;
  in >> magic >> width >> height >> maxval;
  if (magic != "P5" || maxval != 255 || width <= 0 || height <= 0) {
    throw FormatError(path.string() + ": not an 8-bit P5 graymap");
  }
  in.get();
  const auto offset = static_cast<std::size_t>(in.tellg());
  const std::size_t n = static_cast<std::size_t>(width) * height;
  if (bytes.size() - offset != n) throw FormatError(path.string() + ": truncated graymap");
  return std::vector<std::uint8_t>(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end());
}

// ---------------------------------------------------------------- PLY

struct CloudPoint {
  float x = 0, y = 0, z = 0;
  float residual = 0;
  std::int32_t px = 0, py = 0;
  friend bool operator==(const CloudPoint&, const CloudPoint&) = default;
};

enum class PlyEncoding { ascii, binary_little_endian };

inline std::string encode_ply(const std::vector<CloudPoint>& points, PlyEncoding encoding) {
  std::string out = "ply\nformat ";
  out += encoding == PlyEncoding::ascii ? "ascii" : "binary_little_endian";
  out += " 1.0\ncomment lookup3d point cloud\nelement vertex " + std::to_string(points.size()) +
         "\nproperty float x\nproperty float y\nproperty float z\nproperty float residual\n"
         "property int px\nproperty int py\nend_header\n";
  if (encoding == PlyEncoding::binary_little_endian) {
    out.reserve(out.size() + points.size() * 24);
    for (const auto& p : points) {
      detail::put(out, p.x);
      detail::put(out, p.y);
      detail::put(out, p.z);
      detail::put(out, p.residual);
      detail::put(out, p.px);
      detail::put(out, p.py);
    }
  } else {
    char buf[256];
    for (const auto& p : points) {
      std::snprintf(buf, sizeof(buf), "%.9g %.9g %.9g %.9g %d %d\n", p.x, p.y, p.z, p.residual, p.px, p.py);
      out += buf;
    }
  }
  return out;
}

inline std::vector<CloudPoint> decode_ply(std::string_view bytes, const std::string& what = "ply") {
  detail::ByteReader r(bytes, what);
  if (trim(r.line()) != "ply") throw FormatError(what + ": missing 'ply' magic");
  std::optional<PlyEncoding> encoding;
  long long count = -1;
  std::vector<std::pair<std::string, std::string>> props;  // (type, name)
  bool in_vertex = false;
  for (;;) {
    const std::string line = trim(r.line());
    if (line == "end_header") break;
    const auto w = split_words(line);
    if (w.empty() || w[0] == "comment" || w[0] == "obj_info") continue;
    if (w[0] == "format") {
      if (w.size() < 2) throw FormatError(what + ": bad format line");
      if (w[1] == "ascii") {
        encoding = PlyEncoding::ascii;
      } else if (w[1] == "binary_little_endian") {
        encoding = PlyEncoding::binary_little_endian;
      } else {
        throw FormatError(what + ": unsupported encoding '" + w[1] + "'");
      }
    } else if (w[0] == "element") {
      if (w.size() != 3) throw FormatError(what + ": bad element line");
      in_vertex = w[1] == "vertex";
      if (in_vertex) {
        count = parse_integer(w[2], what);
      } else if (parse_integer(w[2], what) != 0) {
        throw FormatError(what + ": only vertex elements are supported");
      }
    } else if (w[0] == "property") {
      if (!in_vertex) continue;
      if (w.size() != 3) throw FormatError(what + ": unsupported property '" + line + "'");
      props.emplace_back(w[1], w[2]);
    } else {
      throw FormatError(what + ": unexpected header line '" + line + "'");
    }
  }
  if (!encoding) throw FormatError(what + ": missing format line");
  if (count < 0) throw FormatError(what + ": missing vertex element");

  auto index_of = [&](const std::string& name) -> int {
    for (std::size_t i = 0; i < props.size(); ++i) {
      if (props[i].second == name) return static_cast<int>(i);
    }
    return -1;
  };
  for (const char* required : {"x", "y", "z"}) {
    if (index_of(required) < 0) throw FormatError(what + ": missing property '" + required + "'");
  }
  auto type_size = [&](const std::string& t) -> std::size_t {
    if (t == "float" || t == "float32" || t == "int" || t == "int32" || t == "uint" || t == "uint32") return 4;
    if (t == "double" || t == "float64") return 8;
    if (t == "uchar" || t == "uint8" || t == "char" || t == "int8") return 1;
    if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
    throw FormatError(what + ": unsupported property type '" + t + "'");
  };

  std::vector<CloudPoint> points(static_cast<std::size_t>(count));
  std::vector<double> values(props.size());
  std::istringstream ascii;
  if (*encoding == PlyEncoding::ascii) ascii.str(std::string(bytes.substr(r.position())));
  for (auto& p : points) {
    for (std::size_t k = 0; k < props.size(); ++k) {
      const auto& t = props[k].first;
      if (*encoding == PlyEncoding::ascii) {
        std::string tok;
        if (!(ascii >> tok)) throw FormatError(what + ": truncated vertex data");
        values[k] = parse_double(tok, what);
      } else {
        const std::size_t sz = type_size(t);
        if (t == "float" || t == "float32") values[k] = r.get<float>();
        else if (t == "double" || t == "float64") values[k] = r.get<double>();
        else if (t == "int" || t == "int32") values[k] = r.get<std::int32_t>();
        else if (t == "uint" || t == "uint32") values[k] = r.get<std::uint32_t>();
        else if (sz == 2) values[k] = (t == "short" || t == "int16") ? r.get<std::int16_t>() : r.get<std::uint16_t>();
        else values[k] = (t == "char" || t == "int8") ? r.get<std::int8_t>() : r.get<std::uint8_t>();
      }
    }
    auto get = [&](const char* name, double fallback) {
      const int i = index_of(name);
      return i < 0 ? fallback : values[static_cast<std::size_t>(i)];
    };
    p.x = static_cast<float>(get("x", 0));
    p.y = static_cast<float>(get("y", 0));
    p.z = static_cast<float>(get("z", 0));
    p.residual = static_cast<float>(get("residual", 0));
    p.px = static_cast<std::int32_t>(get("px", -1));
    p.py = static_cast<std::int32_t>(get("py", -1));
  }
  if (*encoding == PlyEncoding::binary_little_endian && r.remaining() != 0) {
    throw FormatError(what + ": " + std::to_string(r.remaining()) + " trailing bytes after vertex data");
  }
  return points;
}

inline void write_ply(const std::filesystem::path& path, const std::vector<CloudPoint>& points,
                      PlyEncoding encoding = PlyEncoding::binary_little_endian) {
  write_file(path, encode_ply(points, encoding));
}
inline std::vector<CloudPoint> read_ply(const std::filesystem::path& path) {
  return decode_ply(read_file(path), path.string());
}

// ---------------------------------------------------------------- key-value text

/// Ordered "key = value" document. Unknown keys survive a read/write cycle.
class KeyValueFile {
 public:
  KeyValueFile() = default;
  explicit KeyValueFile(std::string header) : header_(std::move(header)) {}

  static KeyValueFile parse(std::string_view text, const std::string& what) {
    KeyValueFile kv;
    std::istringstream in{std::string(text)};
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      const std::string line = trim(raw);
      if (line.empty() || line[0] == '#') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        if (kv.entries_.empty() && kv.header_.empty()) {
          kv.header_ = line;
          continue;
        }
        throw FormatError(what + ":" + std::to_string(line_no) + ": expected 'key = value'");
      }
      const std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw FormatError(what + ":" + std::to_string(line_no) + ": empty key");
      if (kv.find(key)) throw FormatError(what + ":" + std::to_string(line_no) + ": duplicate key '" + key + "'");
      kv.entries_.emplace_back(key, trim(line.substr(eq + 1)));
    }
    kv.what_ = what;
    return kv;
  }

  std::string str() const {
    std::string out;
    if (!header_.empty()) out += header_ + "\n";
    for (const auto& [k, v] : entries_) out += k + " = " + v + "\n";
    return out;
  }

  const std::string& header() const { return header_; }
  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  const std::string* find(std::string_view key) const {
    for (const auto& [k, v] : entries_) {
      if (k == key) return &v;
    }
    return nullptr;
  }
  bool has(std::string_view key) const { return find(key) != nullptr; }

  const std::string& require(std::string_view key) const {
    const auto* v = find(key);
    if (!v) throw FormatError(what_ + ": missing required key '" + std::string(key) + "'");
    return *v;
  }
  double number(std::string_view key) const {
    return parse_double(require(key), what_ + ": key '" + std::string(key) + "'");
  }
  double number_or(std::string_view key, double fallback) const { return has(key) ? number(key) : fallback; }
  long long integer(std::string_view key) const {
    return parse_integer(require(key), what_ + ": key '" + std::string(key) + "'");
  }
  long long integer_or(std::string_view key, long long fallback) const { return has(key) ? integer(key) : fallback; }
  std::vector<double> numbers(std::string_view key) const {
    std::vector<double> out;
    for (const auto& w : split_words(require(key))) out.push_back(parse_double(w, what_ + ": key '" + std::string(key) + "'"));
    return out;
  }
  std::string text_or(std::string_view key, std::string fallback) const {
    const auto* v = find(key);
    return v ? *v : fallback;
  }

  void set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries_) {
      if (k == key) {
        v = value;
        return;
      }
    }
    entries_.emplace_back(key, value);
  }
  void set(const std::string& key, double value) { set(key, format_double(value)); }
  void set(const std::string& key, long long value) { set(key, std::to_string(value)); }
  void set(const std::string& key, int value) { set(key, std::to_string(value)); }
  void set(const std::string& key, std::size_t value) { set(key, std::to_string(value)); }
  void set_numbers(const std::string& key, const std::vector<double>& values) {
    std::string s;
    for (std::size_t i = 0; i < values.size(); ++i) s += (i ? " " : "") + format_double(values[i]);
    set(key, s);
  }
  void erase(std::string_view key) {
    std::erase_if(entries_, [&](const auto& e) { return e.first == key; });
  }
  const std::string& source() const { return what_; }

 private:
  std::string header_;
  std::vector<std::pair<std::string, std::string>> entries_;
  std::string what_ = "key-value file";
};

// ---------------------------------------------------------------- manifest

/// One capture in a sweep or scan directory.
struct ManifestFrame {
  /// Stage position (sweeps) or frame time index (scans).
  double position = 0.0;
  bool in_view = true;
  /// Reported board plane: point then normal. Empty for scans.
  std::vector<double> plane;
  /// Ground-truth plane, when known.
  std::vector<double> truth;
  friend bool operator==(const ManifestFrame&, const ManifestFrame&) = default;
};

/// Metadata binding a directory of PFM frames to patterns, positions and seeds.
struct Manifest {
  std::string kind = "sweep";
  int width = 0;
  int height = 0;
  std::vector<std::string> pattern_ids;
  std::vector<int> pattern_channels;
  std::uint64_t seed = 0;
  /// Camera intrinsics: width height fx fy cx cy k1.
  std::vector<double> camera;
  std::vector<ManifestFrame> frames;
  /// Keys this version does not interpret, echoed back on write.
  std::vector<std::pair<std::string, std::string>> extra;
  friend bool operator==(const Manifest&, const Manifest&) = default;

  /// File name of channel c of pattern `id` in frame k.
  static std::string frame_file(std::size_t k, const std::string& id, int c) {
    char buf[96];
    std::snprintf(buf, sizeof(buf), "frame%05zu_%s_c%d.pfm", k, id.c_str(), c);
    return buf;
  }
};

inline std::string encode_manifest(const Manifest& m) {
  KeyValueFile kv(std::string(kManifestMagic) + " " + std::to_string(kManifestVersion));
  kv.set("kind", m.kind);
  kv.set("width", m.width);
  kv.set("height", m.height);
  std::string ids;
  std::string chans;
  for (std::size_t i = 0; i < m.pattern_ids.size(); ++i) {
    ids += (i ? " " : "") + m.pattern_ids[i];
    chans += (i ? " " : "") + std::to_string(m.pattern_channels[i]);
  }
  kv.set("patterns", ids);
  kv.set("pattern_channels", chans);
  kv.set("seed", std::to_string(m.seed));
  kv.set_numbers("camera", m.camera);
  kv.set("frames", m.frames.size());
  for (std::size_t k = 0; k < m.frames.size(); ++k) {
    const auto& f = m.frames[k];
    const std::string p = "frame." + std::to_string(k) + ".";
    kv.set(p + "position", f.position);
    kv.set(p + "in_view", f.in_view ? 1 : 0);
    if (!f.plane.empty()) kv.set_numbers(p + "plane", f.plane);
    if (!f.truth.empty()) kv.set_numbers(p + "truth", f.truth);
  }
  for (const auto& [k, v] : m.extra) kv.set(k, v);
  return kv.str();
}

inline Manifest decode_manifest(std::string_view text, const std::string& what = "manifest") {
  const KeyValueFile kv = KeyValueFile::parse(text, what);
  const auto header = split_words(kv.header());
  if (header.size() != 2 || header[0] != kManifestMagic) {
    throw FormatError(what + ": missing '" + std::string(kManifestMagic) + " <version>' header");
  }
  if (parse_integer(header[1], what) != kManifestVersion) {
    throw FormatError(what + ": unsupported manifest version " + header[1]);
  }
  Manifest m;
  m.kind = kv.require("kind");
  m.width = static_cast<int>(kv.integer("width"));
  m.height = static_cast<int>(kv.integer("height"));
  m.pattern_ids = split_words(kv.require("patterns"));
  for (const auto& w : split_words(kv.require("pattern_channels"))) {
    m.pattern_channels.push_back(static_cast<int>(parse_integer(w, what + ": pattern_channels")));
  }
  if (m.pattern_channels.size() != m.pattern_ids.size()) {
    throw FormatError(what + ": 'patterns' and 'pattern_channels' differ in length");
  }
  {
    const std::string& seed = kv.require("seed");
    const auto res = std::from_chars(seed.data(), seed.data() + seed.size(), m.seed);
    if (res.ec != std::errc() || res.ptr != seed.data() + seed.size()) {
      throw FormatError(what + ": key 'seed' is not an unsigned integer");
    }
  }
  m.camera = kv.numbers("camera");
  const auto n = kv.integer("frames");
  if (n < 0) throw FormatError(what + ": negative frame count");
  std::vector<std::string> known = {"kind", "width", "height", "patterns", "pattern_channels",
                                    "seed", "camera", "frames"};
  for (long long k = 0; k < n; ++k) {
    const std::string p = "frame." + std::to_string(k) + ".";
    ManifestFrame f;
    f.position = kv.number(p + "position");
    f.in_view = kv.integer_or(p + "in_view", 1) != 0;
    if (kv.has(p + "plane")) f.plane = kv.numbers(p + "plane");
    if (kv.has(p + "truth")) f.truth = kv.numbers(p + "truth");
    for (const char* s : {"position", "in_view", "plane", "truth"}) known.push_back(p + s);
    m.frames.push_back(std::move(f));
  }
  for (const auto& [k, v] : kv.entries()) {
    if (std::find(known.begin(), known.end(), k) == known.end()) m.extra.emplace_back(k, v);
  }
  return m;
}

inline void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  write_file(path, encode_manifest(m));
}
inline Manifest read_manifest(const std::filesystem::path& path) {
  return decode_manifest(read_file(path), path.string());
}

}  // namespace lookup3d
