// License: Apache 2.0. See LICENSE file in root directory.
// Copyright(c) 2026 retex contributors. All Rights Reserved.

#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

#include "retex/raster.hpp"

namespace retex {

constexpr double kDepthSentinel = std::numeric_limits<double>::infinity();
constexpr int32_t kTexelSentinel = -1;

/// Per-pixel render outputs shared by the splat, mesh, and point renderers.
/// Sentinels: depth +inf, normal all-zero, texel_id -1.
struct GBuffer {
  Image color;              // H x W x 3, [0,1]
  Image depth;              // H x W, camera-space z
  Image alpha;              // H x W, [0,1]
  Image normal;             // H x W x 3, unit where set
  Raster<int32_t> texel_id; // H x W, mesh renderer only

  int height() const { return depth.height(); }
  int width() const { return depth.width(); }

  bool has_depth(int y, int x) const { return std::isfinite(depth(y, x)); }

  bool has_normal(int y, int x) const {
    return normal(y, x, 0) != 0.0 || normal(y, x, 1) != 0.0 || normal(y, x, 2) != 0.0;
  }

  static GBuffer make(int height, int width) {
    GBuffer g;
    g.color = Image(height, width, 3, 0.0);
    g.depth = Image(height, width, 1, kDepthSentinel);
    g.alpha = Image(height, width, 1, 0.0);
    g.normal = Image(height, width, 3, 0.0);
    g.texel_id = Raster<int32_t>(height, width, 1, kTexelSentinel);
    return g;
  }
};

}  // namespace retex
