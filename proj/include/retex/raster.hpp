// License: Apache 2.0. See LICENSE file in root directory.
// Copyright(c) 2026 retex contributors. All Rights Reserved.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace retex {

/// Dense row-major raster: height x width x channels, y grows downward.
template <typename T>
class Raster {
 public:
  Raster() = default;

  Raster(int height, int width, int channels = 1, T fill = T{})
      : height_(height), width_(width), channels_(channels) {
    if (height < 0 || width < 0 || channels <= 0)
      throw std::invalid_argument("Raster: bad shape");
    data_.assign(static_cast<size_t>(height) * width * channels, fill);
  }

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T& operator()(int y, int x, int c = 0) { return data_[index(y, x, c)]; }
  const T& operator()(int y, int x, int c = 0) const { return data_[index(y, x, c)]; }

  T& at(int y, int x, int c = 0) {
    check(y, x, c);
    return data_[index(y, x, c)];
  }
  const T& at(int y, int x, int c = 0) const {
    check(y, x, c);
    return data_[index(y, x, c)];
  }

  bool in_bounds(int y, int x) const {
    return y >= 0 && y < height_ && x >= 0 && x < width_;
  }

  bool same_shape(const Raster& o) const {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

 private:
  size_t index(int y, int x, int c) const {
    return (static_cast<size_t>(y) * width_ + x) * channels_ + c;
  }
  void check(int y, int x, int c) const {
    if (!in_bounds(y, x) || c < 0 || c >= channels_)
      throw std::out_of_range("Raster: index out of range");
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 1;
  std::vector<T> data_;
};

using Image = Raster<double>;
using MaskImage = Raster<uint8_t>;

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

/// Average pooling by an integer factor. Source dimensions must divide evenly.
inline Image average_pool(const Image& src, int factor) {
  if (factor <= 0 || src.height() % factor != 0 || src.width() % factor != 0)
    throw std::invalid_argument("average_pool: factor must divide both dimensions");
  Image out(src.height() / factor, src.width() / factor, src.channels());
  const double inv = 1.0 / (static_cast<double>(factor) * factor);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      for (int c = 0; c < out.channels(); ++c) {
        double acc = 0.0;
        for (int dy = 0; dy < factor; ++dy)
          for (int dx = 0; dx < factor; ++dx)
            acc += src(y * factor + dy, x * factor + dx, c);
        out(y, x, c) = acc * inv;
      }
  return out;
}

inline double max_abs_diff(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (size_t i = 0; i < a.data().size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

inline double mean_abs_diff(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mean_abs_diff: shape mismatch");
  if (a.data().empty()) return 0.0;
  double s = 0.0;
  for (size_t i = 0; i < a.data().size(); ++i) s += std::abs(a.data()[i] - b.data()[i]);
  return s / static_cast<double>(a.data().size());
}

}  // namespace retex
