#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lookup3d {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (bad spec, out-of-range pixel, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// Two inputs disagree on shape (image size, channel count).
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// A file could not be read or does not match its declared format.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Geometry is degenerate (coincident points, parallel ray).
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

/// Dense row-major H x W x C image. Pixel (x, y) is column x, row y.
template <typename T>
class Image {
 public:
  using value_type = T;

  Image() = default;
  Image(int width, int height, int channels, T fill = T{})
      : width_(width), height_(height), channels_(channels) {
    if (width < 0 || height < 0 || channels < 0) {
      throw InvalidArgument("Image: negative dimension");
    }
    data_.assign(static_cast<std::size_t>(width) * height * channels, fill);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept {
    return static_cast<std::size_t>(width_) * height_;
  }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::size_t index(int x, int y, int c = 0) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  T& operator()(int x, int y, int c = 0) noexcept { return data_[index(x, y, c)]; }
  const T& operator()(int x, int y, int c = 0) const noexcept {
    return data_[index(x, y, c)];
  }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::vector<T>& values() noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  bool same_shape(const Image& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_ &&
           channels_ == other.channels_;
  }

  friend bool operator==(const Image& a, const Image& b) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

/// Extracts a single channel as a one-channel image.
template <typename T>
Image<T> extract_channel(const Image<T>& image, int channel) {
  if (channel < 0 || channel >= image.channels()) {
    throw InvalidArgument("extract_channel: channel " + std::to_string(channel) +
                          " out of range");
  }
  Image<T> out(image.width(), image.height(), 1);
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) out(x, y) = image(x, y, channel);
  }
  return out;
}

/// Inverse of extract_channel over a full set of planes.
template <typename T>
Image<T> merge_channels(const std::vector<Image<T>>& planes) {
  if (planes.empty()) return {};
  const int w = planes.front().width();
  const int h = planes.front().height();
  Image<T> out(w, h, static_cast<int>(planes.size()));
  for (std::size_t c = 0; c < planes.size(); ++c) {
    if (planes[c].width() != w || planes[c].height() != h || planes[c].channels() != 1) {
      throw DimensionMismatch("merge_channels: plane " + std::to_string(c) +
                              " has a different shape");
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) out(x, y, static_cast<int>(c)) = planes[c](x, y);
    }
  }
  return out;
}

}  // namespace lookup3d
