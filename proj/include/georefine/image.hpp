#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "georefine/error.hpp"

namespace georefine {

/// Row-major H x W grid. Pixel (x, y) lives at index y * width + x.
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {
    if (width < 0 || height < 0) {
      throw Error(ErrorCode::invalid_argument, "negative grid size");
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  bool in_bounds(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }
  bool same_shape(int width, int height) const noexcept {
    return width_ == width && height_ == height;
  }
  template <typename U>
  bool same_shape(const Grid<U>& other) const noexcept {
    return same_shape(other.width(), other.height());
  }

  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const { return data_[index(x, y)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int x, int y) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  std::vector<T>& data() noexcept { return data_; }
  const std::vector<T>& data() const noexcept { return data_; }

  void fill(const T& value) { std::fill(data_.begin(), data_.end(), value); }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using Mask = Grid<std::uint8_t>;

/// Intensities in [0, 1], 1 or 3 interleaved channels.
class ImageGrid {
 public:
  ImageGrid() = default;
  ImageGrid(int width, int height, int channels = 1, double fill = 0.0)
      : width_(width), height_(height), channels_(channels),
        values_(static_cast<std::size_t>(width) * height * channels, fill) {
    if (channels != 1 && channels != 3) {
      throw Error(ErrorCode::invalid_argument, "image must have 1 or 3 channels");
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }

  double& at(int x, int y, int c = 0) { return values_[offset(x, y, c)]; }
  double at(int x, int y, int c = 0) const { return values_[offset(x, y, c)]; }

  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  bool in_bounds(int x, int y) const noexcept {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }

  friend bool operator==(const ImageGrid&, const ImageGrid&) = default;

 private:
  std::size_t offset(int x, int y, int c) const noexcept {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<double> values_;
};

/// Metric depths with a validity mask. Every valid entry is finite and > 0.
struct DepthMap {
  Grid<double> values;
  Mask valid;

  DepthMap() = default;
  DepthMap(int width, int height) : values(width, height, 0.0), valid(width, height, 0) {}

  int width() const noexcept { return values.width(); }
  int height() const noexcept { return values.height(); }

  bool is_valid(int x, int y) const { return valid.in_bounds(x, y) && valid(x, y) != 0; }

  void set(int x, int y, double depth) {
    values(x, y) = depth;
    valid(x, y) = (std::isfinite(depth) && depth > 0.0) ? 1 : 0;
  }

  std::size_t valid_count() const {
    std::size_t n = 0;
    for (auto v : valid.data()) n += v != 0;
    return n;
  }

  friend bool operator==(const DepthMap&, const DepthMap&) = default;
};

/// Bilinear footprint of a subpixel location. Corners with zero weight (integer coordinate)
/// are not part of the footprint, so sampling exactly on the last row/column is allowed.
struct Bilinear {
  int x0 = 0;
  int y0 = 0;
  double ax = 0.0;  // fractional part along x
  double ay = 0.0;
  bool has_x1 = false;
  bool has_y1 = false;

  static std::optional<Bilinear> at(double u, double v, int width, int height) {
    if (!std::isfinite(u) || !std::isfinite(v)) return std::nullopt;
    const double fu = std::floor(u);
    const double fv = std::floor(v);
    if (fu < 0.0 || fv < 0.0 || fu > width - 1 || fv > height - 1) return std::nullopt;
    Bilinear b;
    b.x0 = static_cast<int>(fu);
    b.y0 = static_cast<int>(fv);
    b.ax = u - fu;
    b.ay = v - fv;
    b.has_x1 = b.ax != 0.0;
    b.has_y1 = b.ay != 0.0;
    if (b.has_x1 && b.x0 + 1 > width - 1) return std::nullopt;
    if (b.has_y1 && b.y0 + 1 > height - 1) return std::nullopt;
    return b;
  }

  int x1() const noexcept { return has_x1 ? x0 + 1 : x0; }
  int y1() const noexcept { return has_y1 ? y0 + 1 : y0; }

  bool footprint_valid(const Mask& mask) const {
    return mask(x0, y0) && mask(x1(), y0) && mask(x0, y1()) && mask(x1(), y1());
  }

  /// Interpolated value plus partial derivatives with respect to u and v.
  template <typename Fetch>
  void sample(Fetch&& fetch, double& value, double& d_du, double& d_dv) const {
    const double v00 = fetch(x0, y0);
    const double v10 = has_x1 ? fetch(x0 + 1, y0) : v00;
    const double v01 = has_y1 ? fetch(x0, y0 + 1) : v00;
    const double v11 = (has_x1 && has_y1) ? fetch(x0 + 1, y0 + 1) : (has_x1 ? v10 : v01);
    const double top = v00 + ax * (v10 - v00);
    const double bottom = v01 + ax * (v11 - v01);
    value = top + ay * (bottom - top);
    d_du = has_x1 ? (1.0 - ay) * (v10 - v00) + ay * (v11 - v01) : 0.0;
    d_dv = has_y1 ? bottom - top : 0.0;
  }

  template <typename Fetch>
  double sample(Fetch&& fetch) const {
    double value, du, dv;
    sample(fetch, value, du, dv);
    return value;
  }
};

}  // namespace georefine
