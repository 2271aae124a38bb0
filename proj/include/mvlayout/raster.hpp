#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "errors.hpp"

namespace mvl {

// Dense row-major 2D grid. Row v, column u lives at data[v * width + u].
template <typename T>
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, T fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * height, fill) {
    detail::require(width >= 0 && height >= 0, "raster dimensions must be non-negative");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int u, int v) { return data_[index(u, v)]; }
  const T& operator()(int u, int v) const { return data_[index(u, v)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::size_t index(int u, int v) const {
    return static_cast<std::size_t>(v) * width_ + u;
  }

  std::span<T> pixels() { return data_; }
  std::span<const T> pixels() const { return data_; }

  template <typename U>
  bool same_shape(const Raster<U>& other) const {
    return width_ == other.width() && height_ == other.height();
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

using GrayImage = Raster<float>;
using Rgb8 = std::array<std::uint8_t, 3>;
using RgbImage = Raster<Rgb8>;

inline int wrap_column(int u, int width) {
  int r = u % width;
  return r < 0 ? r + width : r;
}

inline int clamp_row(int v, int height) { return std::clamp(v, 0, height - 1); }

// Bilinear sample at continuous coordinate (x, y), where pixel (i, j) has its
// center at (i + 0.5, j + 0.5). Columns wrap (longitude); rows clamp.
template <typename T>
double sample_bilinear(const Raster<T>& img, double x, double y) {
  const double fx = x - 0.5;
  const double fy = y - 0.5;
  const double x0f = std::floor(fx);
  const double y0f = std::floor(fy);
  const double ax = fx - x0f;
  const double ay = fy - y0f;
  const int x0 = wrap_column(static_cast<int>(x0f), img.width());
  const int x1 = wrap_column(x0 + 1, img.width());
  const int y0 = clamp_row(static_cast<int>(y0f), img.height());
  const int y1 = clamp_row(static_cast<int>(y0f) + 1, img.height());
  const double top = (1.0 - ax) * img(x0, y0) + ax * img(x1, y0);
  const double bottom = (1.0 - ax) * img(x0, y1) + ax * img(x1, y1);
  return (1.0 - ay) * top + ay * bottom;
}

inline GrayImage to_gray(const RgbImage& rgb) {
  GrayImage out(rgb.width(), rgb.height());
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    const auto& p = rgb[i];
    out[i] = static_cast<float>((0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]) / 255.0);
  }
  return out;
}

}  // namespace mvl
