// License: Apache 2.0. See LICENSE file in root directory.
// Copyright(c) 2026 retex contributors. All Rights Reserved.

#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>

#include "retex/raster.hpp"

namespace retex {

inline double mean_squared_error(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mse: shape mismatch");
  if (a.data().empty()) return 0.0;
  double acc = 0.0;
  for (size_t i = 0; i < a.data().size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.data().size());
}

/// Peak signal-to-noise ratio in dB for [0,1] images: 10 log10(1 / MSE).
/// Identical inputs return +inf.
inline double psnr(const Image& a, const Image& b) {
  const double mse = mean_squared_error(a, b);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

/// PSNR restricted to pixels where mask is set; +inf when identical there,
/// NaN-free 0/0 guarded by the empty flag convention of mse_loss.
inline double masked_psnr(const Image& a, const Image& b, const MaskImage& mask) {
  if (!a.same_shape(b)) throw std::invalid_argument("masked_psnr: shape mismatch");
  if (mask.height() != a.height() || mask.width() != a.width())
    throw std::invalid_argument("masked_psnr: mask shape mismatch");
  double acc = 0.0;
  int64_t n = 0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      if (!mask(y, x)) continue;
      for (int c = 0; c < a.channels(); ++c) {
        const double d = a(y, x, c) - b(y, x, c);
        acc += d * d;
        ++n;
      }
    }
  if (n == 0) return std::numeric_limits<double>::infinity();
  const double mse = acc / static_cast<double>(n);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace retex
