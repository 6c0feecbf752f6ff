#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "test_support.hpp"

using namespace lookup3d;
using testsupport::TempDir;

namespace {

Image<float> random_image(int w, int h, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-1e3f, 1e3f);
  Image<float> img(w, h, c);
  for (auto& v : img.values()) v = u(rng);
  return img;
}

std::vector<CloudPoint> random_points(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(-2.0f, 2.0f);
  std::vector<CloudPoint> pts(n);
  for (auto& p : pts) {
    p = {u(rng), u(rng), u(rng), std::abs(u(rng)), static_cast<std::int32_t>(rng() % 4096),
         static_cast<std::int32_t>(rng() % 4096)};
  }
  return pts;
}

}  // namespace

TEST(Pfm, RoundTripIsBitExact) {
  TempDir dir("pfm");
  for (int c : {1, 3}) {
    const auto img = random_image(17, 9, c, static_cast<std::uint64_t>(c));
    const auto path = dir.path() / ("img" + std::to_string(c) + ".pfm");
    write_pfm(path, img);
    const auto back = read_pfm(path);
    ASSERT_TRUE(back.same_shape(img));
    EXPECT_TRUE(testsupport::same_bits(back.values(), img.values()));
    EXPECT_EQ(detect_format(read_file(path)).kind, PayloadKind::pfm_image);
  }
}

TEST(Pfm, RowsAreStoredBottomUp) {
  Image<float> img(1, 2, 1);
  img(0, 0) = 1.0f;
  img(0, 1) = 2.0f;
  const auto bytes = encode_pfm(img);
  float first = 0.0f;
  std::memcpy(&first, bytes.data() + bytes.size() - 8, 4);
  EXPECT_EQ(first, 2.0f);
}

TEST(Pfm, NonFiniteRejectedOnWrite) {
  auto img = random_image(4, 4, 1, 1);
  img(2, 3) = std::numeric_limits<float>::quiet_NaN();
  EXPECT_THROW(encode_pfm(img), InvalidArgument);
  img(2, 3) = std::numeric_limits<float>::infinity();
  EXPECT_THROW(encode_pfm(img), InvalidArgument);
  EXPECT_THROW(encode_pfm(Image<float>(2, 2, 2)), InvalidArgument);
}

TEST(Pfm, HeaderMismatchRejected) {
  const auto bytes = encode_pfm(random_image(5, 4, 1, 2));
  EXPECT_THROW(decode_pfm(bytes.substr(0, bytes.size() - 4)), FormatError);
  std::string wrong = bytes;
  wrong.replace(wrong.find("5 4"), 3, "5 5");
  EXPECT_THROW(decode_pfm(wrong), FormatError);
  std::string big_endian = bytes;
  big_endian.replace(big_endian.find("-1.0"), 4, "1.0 ");
  EXPECT_THROW(decode_pfm(big_endian), FormatError);
  EXPECT_THROW(decode_pfm("P6\n1 1\n255\n"), FormatError);
}

TEST(Ply, EmptyCloudIsValid) {
  for (auto enc : {PlyEncoding::ascii, PlyEncoding::binary_little_endian}) {
    const auto bytes = encode_ply({}, enc);
    EXPECT_NE(bytes.find("element vertex 0\n"), std::string::npos);
    EXPECT_TRUE(decode_ply(bytes).empty());
  }
}

TEST(Ply, BinaryRoundTripIsBitExact) {
  TempDir dir("ply");
  const auto pts = random_points(1000, 3);
  write_ply(dir.path() / "c.ply", pts, PlyEncoding::binary_little_endian);
  const auto back = read_ply(dir.path() / "c.ply");
  ASSERT_EQ(back.size(), pts.size());
  EXPECT_EQ(std::memcmp(back.data(), pts.data(), pts.size() * sizeof(CloudPoint)), 0);
}

TEST(Ply, AsciiRoundTripWithinPrintedPrecision) {
  const auto pts = random_points(1000, 4);
  const auto back = decode_ply(encode_ply(pts, PlyEncoding::ascii));
  ASSERT_EQ(back.size(), pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    EXPECT_NEAR(back[i].x, pts[i].x, 1e-6);
    EXPECT_NEAR(back[i].y, pts[i].y, 1e-6);
    EXPECT_NEAR(back[i].z, pts[i].z, 1e-6);
    EXPECT_NEAR(back[i].residual, pts[i].residual, 1e-6);
    EXPECT_EQ(back[i].px, pts[i].px);
    EXPECT_EQ(back[i].py, pts[i].py);
  }
}

TEST(Ply, TruncatedAndMalformedRejected) {
  const auto bytes = encode_ply(random_points(10, 5), PlyEncoding::binary_little_endian);
  EXPECT_THROW(decode_ply(bytes.substr(0, bytes.size() - 3)), FormatError);
  EXPECT_THROW(decode_ply(bytes.substr(0, 20)), FormatError);
  EXPECT_THROW(decode_ply("ply\nformat binary_big_endian 1.0\nelement vertex 0\nend_header\n"), FormatError);
  const auto ascii = encode_ply(random_points(3, 6), PlyEncoding::ascii);
  EXPECT_THROW(decode_ply(ascii.substr(0, ascii.size() - 2) + "x\n"), FormatError);
}

namespace {

Manifest sample_manifest() {
  Manifest m;
  m.kind = "sweep";
  m.width = 64;
  m.height = 48;
  m.pattern_ids = {"p0", "white", "dark"};
  m.pattern_channels = {3, 3, 3};
  m.seed = 18446744073709551615ull;
  m.camera = {64, 48, 1000, 1000, 32, 24, 0};
  for (int k = 0; k < 3; ++k) {
    ManifestFrame f;
    f.position = 0.725 + 150e-6 * k;
    f.in_view = k != 1;
    f.plane = {0.0, 0.0, f.position, 0.0, 0.0, -1.0};
    f.truth = {1e-6, 0.0, f.position, 0.0, 0.0, -1.0};
    m.frames.push_back(f);
  }
  m.extra = {{"pattern", "spiral"}, {"noisy", "1"}};
  return m;
}

}  // namespace

TEST(Manifest, RoundTrip) {
  TempDir dir("manifest");
  const auto m = sample_manifest();
  write_manifest(dir.path() / "manifest.txt", m);
  EXPECT_EQ(read_manifest(dir.path() / "manifest.txt"), m);
  EXPECT_EQ(detect_format(encode_manifest(m)).kind, PayloadKind::manifest);
}

TEST(Manifest, UnknownKeyIsEchoed) {
  auto text = encode_manifest(sample_manifest());
  text += "operator = someone\n";
  const auto m = decode_manifest(text);
  ASSERT_FALSE(m.extra.empty());
  EXPECT_EQ(m.extra.back(), (std::pair<std::string, std::string>{"operator", "someone"}));
  EXPECT_NE(encode_manifest(m).find("operator = someone\n"), std::string::npos);
}

TEST(Manifest, MissingKeyIsNamed) {
  const auto text = encode_manifest(sample_manifest());
  for (const std::string key : {"width", "pattern_channels", "frame.2.position"}) {
    const auto at = text.find("\n" + key + " =") + 1;
    const auto eol = text.find('\n', at);
    const auto broken = text.substr(0, at) + text.substr(eol + 1);
    try {
      decode_manifest(broken);
      FAIL() << key;
    } catch (const FormatError& e) {
      EXPECT_NE(std::string(e.what()).find("'" + key + "'"), std::string::npos) << e.what();
    }
  }
  EXPECT_THROW(decode_manifest("not-a-manifest 1\n"), FormatError);
}

TEST(Manifest, FrameFileNames) {
  EXPECT_EQ(Manifest::frame_file(7, "white", 2), "frame00007_white_c2.pfm");
}

namespace {

RayLUT random_lut(int w, int h, int channels, int knots, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  RayLUT lut(CameraModel{w, h, 100, 100, w / 2.0, h / 2.0, 0}, channels);
  for (int i = 0; i < w * h; ++i) {
    if (i % 7 == 3) {
      lut.push_pixel({}, {}, 0.0f, 0.0f);
      continue;
    }
    std::vector<float> k(static_cast<std::size_t>(knots));
    for (int j = 0; j < knots; ++j) k[j] = 0.7f + 0.05f * std::clamp(j - 3, 0, knots - 8) / (knots - 7.0f);
    std::vector<float> c(static_cast<std::size_t>(channels) * (knots - 4));
    for (auto& v : c) v = u(rng);
    lut.push_pixel(k, c, 0.7f, 0.75f);
  }
  lut.set_depth_range(0.7, 0.75);
  return lut;
}

}  // namespace

TEST(Lut, RoundTripIsExact) {
  TempDir dir("lut");
  const auto lut = random_lut(16, 16, 3, 12, 1);
  save_lut(lut, dir.path() / "lut.bin");
  const auto back = load_lut(dir.path() / "lut.bin");
  EXPECT_EQ(back, lut);
  EXPECT_EQ(back.valid_count(), lut.valid_count());
  EXPECT_EQ(encode_lut(back), encode_lut(lut));
  const auto header = detect_format(read_file(dir.path() / "lut.bin"));
  EXPECT_EQ(header.kind, PayloadKind::lut);
  EXPECT_EQ(header.version, kLutVersion);
}

TEST(Lut, SizeMatchesLayoutFormula) {
  RayLUT lut(CameraModel{256, 256, 200, 200, 128, 128, 0}, 4);
  std::vector<float> k(64);
  for (int j = 0; j < 64; ++j) k[j] = 0.7f + 0.001f * static_cast<float>(std::clamp(j - 3, 0, 56));
  const std::vector<float> c(4 * 60, 0.5f);
  for (int i = 0; i < 256 * 256; ++i) lut.push_pixel(k, c, 0.7f, 0.756f);
  // Header, then per pixel: 3 x 4-byte fields, knots, and 4 x 60 coefficients.
  EXPECT_EQ(encode_lut(lut).size(), 80u + 65536u * (12u + 4u * (64u + 4u * 60u)));
}

TEST(Lut, TruncationAndCorruptionRejected) {
  const auto bytes = encode_lut(random_lut(4, 4, 3, 9, 2));
  for (std::size_t cut : {std::size_t{0}, std::size_t{10}, std::size_t{79}, std::size_t{200}, bytes.size() - 1}) {
    EXPECT_THROW(decode_lut(bytes.substr(0, cut)), FormatError) << cut;
  }
  std::string magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode_lut(magic), FormatError);
  std::string version = bytes;
  version[8] = 9;
  EXPECT_THROW(decode_lut(version), FormatError);
  EXPECT_THROW(decode_lut(bytes + "junk"), FormatError);
  try {
    decode_lut(bytes.substr(0, 200), "lut.bin");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("lut.bin"), std::string::npos);
  }
}

TEST(Lut, CalibratedTableRoundTrips) {
  auto rig = testsupport::small_rig(8);
  const auto lut = simulate_calibration(rig, testsupport::spiral_patterns(256), NoiseModel{}).lut;
  EXPECT_EQ(decode_lut(encode_lut(lut)), lut);
}

TEST(Formats, UnknownBytesRejected) {
  EXPECT_THROW(detect_format("hello"), FormatError);
  EXPECT_EQ(detect_format("ply\nformat ascii 1.0\n").kind, PayloadKind::ply_cloud);
}
