// License: Apache 2.0. See LICENSE file in root directory.
// Copyright(c) 2026 retex contributors. All Rights Reserved.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "retex/gbuffer.hpp"
#include "retex/geometry.hpp"

namespace retex {

/// 1 = pixel invisible from the reference views (needs full repaint).
struct OcclusionMask {
  MaskImage mask;
};

/// Soft per-texel repaint control in [0,1]: 0 on occlusions, 1 where the
/// current view sees no better than before, otherwise the best previous
/// viewing-angle cosine.
struct VisibilityMap {
  Image values;
};

/// 1 = preserve the texel from the inverted branch, 0 = repaint it.
struct RepaintMask {
  MaskImage mask;
};

struct DepthView {
  CameraView cam;
  Image depth;  // H x W, +inf where empty
};

namespace detail {
// Fragments this oblique to a previous camera carry no useful angle signal
// and are dropped from best-previous-view bookkeeping.
constexpr double kGrazingCosine = 0.05;
}  // namespace detail

namespace detail {
inline PointCloud3D depth_to_points(const DepthView& view) {
  PointCloud3D pts;
  pts.points.reserve(static_cast<size_t>(view.cam.width) * view.cam.height / 4);
  for (int y = 0; y < view.cam.height; ++y)
    for (int x = 0; x < view.cam.width; ++x) {
      const double d = view.depth(y, x);
      if (!std::isfinite(d) || !(d > 0.0)) continue;
      pts.add(back_project(pixel_center(x, y), d, view.cam));
    }
  return pts;
}
}  // namespace detail

/// Marks novel-view pixels whose surface was invisible from the reference
/// view. Both depth maps are back-projected to points and z-buffered into the
/// novel view with the same dilation radius: point splatting takes the block
/// minimum, which biases depths low on oblique surfaces, so comparing the raw
/// novel depth against a splatted one would flag slopes. Putting both sides
/// through the same resampling cancels the bias and makes self-comparison
/// exactly clean. A pixel is occlusion when the novel depth exists but the
/// reference reprojection is missing or differs by more than tau.
inline OcclusionMask occlusion_mask(const DepthView& ref, const DepthView& novel, double tau,
                                    int splat_radius = 1) {
  if (novel.depth.height() != novel.cam.height || novel.depth.width() != novel.cam.width ||
      ref.depth.height() != ref.cam.height || ref.depth.width() != ref.cam.width)
    throw std::invalid_argument("occlusion_mask: depth/camera resolution mismatch");
  if (!(tau > 0.0)) throw std::invalid_argument("occlusion_mask: tau must be positive");

  const GBuffer from_ref = splat_points(detail::depth_to_points(ref), novel.cam, splat_radius);
  const GBuffer from_self = splat_points(detail::depth_to_points(novel), novel.cam, splat_radius);

  OcclusionMask out;
  out.mask = MaskImage(novel.cam.height, novel.cam.width, 1, 0);
  for (int y = 0; y < novel.cam.height; ++y)
    for (int x = 0; x < novel.cam.width; ++x) {
      if (!std::isfinite(novel.depth(y, x))) continue;  // background never counts as occlusion
      // a pixel's own back-projected point always covers it, so dn is valid
      const double dn = from_self.depth(y, x);
      const double dr = from_ref.depth(y, x);
      if (!std::isfinite(dr) || std::abs(dn - dr) > tau) out.mask(y, x) = 1;
    }
  return out;
}

struct RenderedView {
  CameraView cam;
  GBuffer gbuf;
};

/// Builds the soft visibility map for a novel view against the previously
/// refined views, then average-pools it to out_size (zeros dominate a pooled
/// texel, so occlusions never get diluted). Each previous view's per-pixel
/// cos theta is reprojected by carrying it as a point attribute; grazing
/// fragments are excluded. Pixels the novel render does not cover read 1
/// (nothing to repaint there).
inline VisibilityMap visibility_map(const RenderedView& novel,
                                    const std::vector<RenderedView>& prev_views,
                                    const OcclusionMask& occ, int out_size = 64) {
  const int h = novel.cam.height, w = novel.cam.width;
  if (occ.mask.height() != h || occ.mask.width() != w)
    throw std::invalid_argument("visibility_map: occlusion mask resolution mismatch");
  if (out_size < 1 || h % out_size != 0 || w % out_size != 0)
    throw std::invalid_argument("visibility_map: render size must be a multiple of the output size");

  Image best_prev(h, w, 1, 0.0);
  Raster<uint8_t> has_prev(h, w, 1, 0);
  for (const RenderedView& prev : prev_views) {
    const Image prev_cos = cos_theta_map(prev.gbuf, prev.cam);
    PointCloud3D pts;
    for (int y = 0; y < prev.cam.height; ++y)
      for (int x = 0; x < prev.cam.width; ++x) {
        const double d = prev.gbuf.depth(y, x);
        if (!std::isfinite(d) || !(d > 0.0)) continue;
        const double c = prev_cos(y, x);
        if (c < detail::kGrazingCosine) continue;
        pts.add(back_project(pixel_center(x, y), d, prev.cam), &c, 1);
      }
    const GBuffer reproj = splat_points(pts, novel.cam, 1);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (!reproj.has_depth(y, x)) continue;
        best_prev(y, x) = std::max(best_prev(y, x), reproj.color(y, x, 0));
        has_prev(y, x) = 1;
      }
  }

  const Image now_cos = cos_theta_map(novel.gbuf, novel.cam);
  Image full(h, w, 1, 1.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!novel.gbuf.has_depth(y, x)) continue;  // stays 1
      if (occ.mask(y, x)) {
        full(y, x) = 0.0;
        continue;
      }
      const double star = has_prev(y, x) ? best_prev(y, x) : 0.0;
      full(y, x) = now_cos(y, x) <= star ? 1.0 : star;
    }

  const int factor = h / out_size;
  VisibilityMap out;
  out.values = Image(out_size, out_size, 1, 0.0);
  for (int ty = 0; ty < out_size; ++ty)
    for (int tx = 0; tx < out_size; ++tx) {
      double acc = 0.0;
      bool zero = false;
      for (int dy = 0; dy < factor && !zero; ++dy)
        for (int dx = 0; dx < factor; ++dx) {
          const double v = full(ty * factor + dy, tx * factor + dx);
          if (v == 0.0) {
            zero = true;
            break;
          }
          acc += v;
        }
      out.values(ty, tx) = zero ? 0.0 : acc / (static_cast<double>(factor) * factor);
    }
  return out;
}

/// Threshold rule: preserve (1) exactly where V > 1 - t/T. Ties repaint.
inline RepaintMask binarize(const VisibilityMap& v, int t, int T) {
  if (T < 1 || t < 0 || t > T) throw std::invalid_argument("binarize: timestep outside [0, T]");
  const double threshold = 1.0 - static_cast<double>(t) / static_cast<double>(T);
  RepaintMask out;
  out.mask = MaskImage(v.values.height(), v.values.width(), 1, 0);
  for (int y = 0; y < v.values.height(); ++y)
    for (int x = 0; x < v.values.width(); ++x)
      out.mask(y, x) = v.values(y, x) > threshold ? 1 : 0;
  return out;
}

inline OcclusionMask intersect(const OcclusionMask& a, const OcclusionMask& b) {
  if (!a.mask.same_shape(b.mask))
    throw std::invalid_argument("intersect: mask resolution mismatch");
  OcclusionMask out;
  out.mask = MaskImage(a.mask.height(), a.mask.width(), 1, 0);
  for (int y = 0; y < a.mask.height(); ++y)
    for (int x = 0; x < a.mask.width(); ++x) out.mask(y, x) = (a.mask(y, x) && b.mask(y, x)) ? 1 : 0;
  return out;
}

}  // namespace retex
