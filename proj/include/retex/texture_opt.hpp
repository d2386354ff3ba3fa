// License: Apache 2.0. See LICENSE file in root directory.
// Copyright(c) 2026 retex contributors. All Rights Reserved.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "retex/error.hpp"
#include "retex/mesh.hpp"

namespace retex {

struct MseLoss {
  double value = 0.0;
  bool empty_mask = false;
};

/// Mean over masked pixels and channels of the squared color difference
/// between the render and the target. An all-zero mask yields 0 with the
/// warning flag set.
inline MseLoss mse_loss(const GBuffer& rendered, const Image& target, const MaskImage& mask) {
  if (rendered.height() != target.height() || rendered.width() != target.width() ||
      target.channels() != 3)
    throw std::invalid_argument("mse_loss: target shape mismatch");
  if (mask.height() != target.height() || mask.width() != target.width() || mask.channels() != 1)
    throw std::invalid_argument("mse_loss: mask shape mismatch");
  double acc = 0.0;
  int64_t n = 0;
  for (int y = 0; y < target.height(); ++y)
    for (int x = 0; x < target.width(); ++x) {
      if (!mask(y, x)) continue;
      ++n;
      for (int c = 0; c < 3; ++c) {
        const double d = rendered.color(y, x, c) - target(y, x, c);
        acc += d * d;
      }
    }
  if (n == 0) return {0.0, true};
  return {acc / (3.0 * static_cast<double>(n)), false};
}

/// Raw texel-space gradient plus the accumulated bilinear weights the
/// optimizer divides by.
struct TexelGradient {
  Image grad;    // T_h x T_w x 3
  Image weight;  // T_h x T_w
};

/// Scatters each covered pixel's upstream color gradient to its four bilinear
/// texel neighbors. Accumulation runs over fixed row bands merged in band
/// order, so the result is bit-identical for any thread count.
inline TexelGradient texture_backward(const TexturedMesh& mesh, const CameraView& cam,
                                      const Image& dL_dColor) {
  if (dL_dColor.height() != cam.height || dL_dColor.width() != cam.width ||
      dL_dColor.channels() != 3)
    throw std::invalid_argument("texture_backward: gradient raster shape mismatch");
  GBuffer gbuf;
  const detail::UvBuffer uvb = detail::rasterize_raw(mesh, cam, gbuf);
  const int tw = mesh.texture.width();
  const int th = mesh.texture.height();

  constexpr int kBands = 8;
  const int64_t rows_per_band = (cam.height + kBands - 1) / kBands;
  struct Band {
    Image grad, weight;
  };
  std::vector<Band> bands(kBands);
  parallel_chunks(cam.height, rows_per_band, [&](int64_t band, int64_t y0, int64_t y1) {
    Band& b = bands[static_cast<size_t>(band)];
    b.grad = Image(th, tw, 3, 0.0);
    b.weight = Image(th, tw, 1, 0.0);
    for (int y = static_cast<int>(y0); y < static_cast<int>(y1); ++y)
      for (int x = 0; x < cam.width; ++x) {
        if (gbuf.alpha(y, x) == 0.0) continue;
        const BilinearSample s = bilinear_footprint(uvb.uv(y, x, 0), uvb.uv(y, x, 1), tw, th);
        for (int k = 0; k < 4; ++k) {
          const int ty = s.idx[k] / tw;
          const int tx = s.idx[k] % tw;
          for (int c = 0; c < 3; ++c) b.grad(ty, tx, c) += s.w[k] * dL_dColor(y, x, c);
          b.weight(ty, tx) += s.w[k];
        }
      }
  });

  TexelGradient out;
  out.grad = Image(th, tw, 3, 0.0);
  out.weight = Image(th, tw, 1, 0.0);
  for (const Band& b : bands) {
    if (b.grad.empty()) continue;
    for (size_t i = 0; i < out.grad.data().size(); ++i) out.grad.data()[i] += b.grad.data()[i];
    for (size_t i = 0; i < out.weight.data().size(); ++i)
      out.weight.data()[i] += b.weight.data()[i];
  }
  return out;
}

struct RefinementView {
  CameraView cam;
  Image target;    // H x W x 3
  MaskImage mask;  // H x W, 1 = fit this pixel
};

/// Weight-normalized gradient descent on the texels of the summed masked MSE.
/// The geometry is static, so each view is rasterized once and its bilinear
/// footprints reused every step; rendering inside the loop is then a sparse
/// texel gather. Touched texels stay in [0,1]; untouched texels are returned
/// unchanged. The per-texel normalization bounds the preconditioned curvature
/// by 1, so the loss is non-increasing for lr <= 1.
inline TexturedMesh refine_texture(const TexturedMesh& mesh,
                                   const std::vector<RefinementView>& views, int steps = 200,
                                   double lr = 0.5, std::vector<double>* step_loss = nullptr) {
  if (views.empty()) throw std::invalid_argument("refine_texture: at least one view required");
  if (steps < 0 || !(lr > 0.0)) throw std::invalid_argument("refine_texture: bad steps or lr");
  TexturedMesh out = mesh;
  const int tw = out.texture.width();
  const int th = out.texture.height();

  struct CachedFragment {
    BilinearSample s;
    double target[3];
  };
  struct CachedView {
    std::vector<CachedFragment> frags;
    double norm = 0.0;  // 2 / (3 * masked pixel count)
  };
  std::vector<CachedView> cache;
  cache.reserve(views.size());
  for (const auto& view : views) {
    if (view.target.height() != view.cam.height || view.target.width() != view.cam.width ||
        view.target.channels() != 3)
      throw std::invalid_argument("refine_texture: target shape mismatch");
    if (view.mask.height() != view.cam.height || view.mask.width() != view.cam.width)
      throw std::invalid_argument("refine_texture: mask shape mismatch");
    GBuffer gbuf;
    const detail::UvBuffer uvb = detail::rasterize_raw(out, view.cam, gbuf);
    CachedView cv;
    int64_t masked = 0;
    for (int y = 0; y < view.cam.height; ++y)
      for (int x = 0; x < view.cam.width; ++x) {
        if (!view.mask(y, x)) continue;
        ++masked;
        if (gbuf.alpha(y, x) == 0.0) continue;
        CachedFragment cf;
        cf.s = bilinear_footprint(uvb.uv(y, x, 0), uvb.uv(y, x, 1), tw, th);
        for (int c = 0; c < 3; ++c) cf.target[c] = view.target(y, x, c);
        cv.frags.push_back(cf);
      }
    cv.norm = masked > 0 ? 2.0 / (3.0 * static_cast<double>(masked)) : 0.0;
    cache.push_back(std::move(cv));
  }

  Image grad(th, tw, 3, 0.0);
  Image weight(th, tw, 1, 0.0);
  if (step_loss) step_loss->clear();
  for (int step = 0; step < steps; ++step) {
    grad.fill(0.0);
    weight.fill(0.0);
    double loss = 0.0;
    for (const CachedView& cv : cache) {
      for (const CachedFragment& cf : cv.frags) {
        double residual[3];
        for (int c = 0; c < 3; ++c) {
          double rendered = 0.0;
          for (int k = 0; k < 4; ++k) {
            const int ty = cf.s.idx[k] / tw;
            const int tx = cf.s.idx[k] % tw;
            rendered += cf.s.w[k] * out.texture(ty, tx, c);
          }
          residual[c] = rendered - cf.target[c];
          loss += 0.5 * cv.norm * residual[c] * residual[c];
        }
        for (int k = 0; k < 4; ++k) {
          const int ty = cf.s.idx[k] / tw;
          const int tx = cf.s.idx[k] % tw;
          for (int c = 0; c < 3; ++c) grad(ty, tx, c) += cv.norm * cf.s.w[k] * residual[c];
          weight(ty, tx) += cv.norm * cf.s.w[k];
        }
      }
    }
    if (!std::isfinite(loss))
      throw NumericError("refine_texture: non-finite loss at step " + std::to_string(step));
    if (step_loss) step_loss->push_back(loss);
    for (int ty = 0; ty < th; ++ty)
      for (int tx = 0; tx < tw; ++tx) {
        const double w = weight(ty, tx);
        if (!(w > 0.0)) continue;
        for (int c = 0; c < 3; ++c)
          out.texture(ty, tx, c) = clamp01(out.texture(ty, tx, c) - lr * grad(ty, tx, c) / w);
      }
  }
  return out;
}

}  // namespace retex
