#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sstlf/error.hpp"

namespace sstlf {

/// Dense row-major interleaved raster.
template <typename T>
class Image {
 public:
  using value_type = T;

  Image() = default;
  Image(int width, int height, int channels = 1, T fill = T{})
      : width_(width), height_(height), channels_(channels),
        data_(static_cast<std::size_t>(width) * height * channels, fill) {
    if (width < 1 || height < 1 || channels < 1) {
      throw Error(ErrorKind::kInvalidArgument, "image dimensions must be positive");
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }

  bool contains(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  bool same_shape(const Image& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
  }

  template <typename U>
  bool same_size(const Image<U>& other) const noexcept {
    return width_ == other.width() && height_ == other.height();
  }

  T& at(int x, int y, int c = 0) noexcept {
    assert(contains(x, y) && c < channels_);
    return data_[index(x, y, c)];
  }
  const T& at(int x, int y, int c = 0) const noexcept {
    assert(contains(x, y) && c < channels_);
    return data_[index(x, y, c)];
  }

  /// Clamp-to-edge access.
  const T& clamped(int x, int y, int c = 0) const noexcept {
    return at(std::clamp(x, 0, width_ - 1), std::clamp(y, 0, height_ - 1), c);
  }

  std::span<T> row(int y) noexcept {
    return {data_.data() + index(0, y, 0), static_cast<std::size_t>(width_) * channels_};
  }
  std::span<const T> row(int y) const noexcept {
    return {data_.data() + index(0, y, 0), static_cast<std::size_t>(width_) * channels_};
  }

  std::span<T> pixel(int x, int y) noexcept {
    return {data_.data() + index(x, y, 0), static_cast<std::size_t>(channels_)};
  }
  std::span<const T> pixel(int x, int y) const noexcept {
    return {data_.data() + index(x, y, 0), static_cast<std::size_t>(channels_)};
  }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  bool operator==(const Image& other) const = default;

 private:
  std::size_t index(int x, int y, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 0;
  std::vector<T> data_;
};

/// Linear-light samples in [0,1]; 1 or 3 channels.
using ViewImage = Image<float>;

/// Single-channel real-valued map (disparity, entropy, cost slices).
using FloatMap = Image<float>;

/// Mean over channels.
inline FloatMap to_gray(const ViewImage& img) {
  FloatMap out(img.width(), img.height(), 1);
  const int ch = img.channels();
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      float sum = 0.0f;
      for (int c = 0; c < ch; ++c) sum += img.at(x, y, c);
      out.at(x, y) = sum / static_cast<float>(ch);
    }
  }
  return out;
}

}  // namespace sstlf
