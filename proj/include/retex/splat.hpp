// License: Apache 2.0. See LICENSE file in root directory.
// Copyright(c) 2026 retex contributors. All Rights Reserved.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "retex/gbuffer.hpp"
#include "retex/geometry.hpp"
#include "retex/parallel.hpp"

namespace retex {

/// One anisotropic Gaussian: position, per-axis extent, orientation
/// (unit quaternion, w x y z), diffuse color, and opacity.
struct Gaussian {
  Vec3 mu = Vec3::Zero();
  Vec3 scale = Vec3::Ones();
  Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0);
  Vec3 color = Vec3::Zero();
  double opacity = 1.0;
};

struct GaussianCloud {
  std::vector<Gaussian> gaussians;
  size_t size() const { return gaussians.size(); }
};

inline void validate_gaussian(const Gaussian& g) {
  if (!g.mu.allFinite() || !g.scale.allFinite() || !g.rotation.allFinite() ||
      !g.color.allFinite() || !std::isfinite(g.opacity))
    throw std::invalid_argument("gaussian: non-finite field");
  if (std::abs(g.rotation.norm() - 1.0) > 1e-9)
    throw std::invalid_argument("gaussian: quaternion is not unit within 1e-9");
  if (!(g.scale.minCoeff() > 0.0)) throw std::invalid_argument("gaussian: scale must be positive");
  if (g.opacity < 0.0 || g.opacity > 1.0)
    throw std::invalid_argument("gaussian: opacity outside [0,1]");
  if (g.color.minCoeff() < 0.0 || g.color.maxCoeff() > 1.0)
    throw std::invalid_argument("gaussian: color outside [0,1]");
}

inline void validate_cloud(const GaussianCloud& cloud) {
  for (const Gaussian& g : cloud.gaussians) validate_gaussian(g);
}

inline Mat3 quat_to_rotation(const Vec4& q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return r;
}

/// Sigma = R * S * S^T * R^T; symmetric positive semi-definite by construction.
inline Mat3 covariance(const Gaussian& g) {
  const Mat3 m = quat_to_rotation(g.rotation) * g.scale.asDiagonal();
  return m * m.transpose();
}

/// Stable ascending sort by camera-space depth; ties keep list order.
inline std::vector<int> sort_front_to_back(const GaussianCloud& cloud, const CameraView& cam) {
  std::vector<int> order(cloud.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> depth(cloud.size());
  for (size_t i = 0; i < cloud.size(); ++i)
    depth[i] = cam.to_camera(cloud.gaussians[i].mu).z();
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return depth[a] < depth[b]; });
  return order;
}

struct SplatRenderStats {
  int64_t skipped_singular = 0;  // projected covariance not invertible
  int64_t skipped_behind = 0;    // center at or behind the camera plane
};

struct SplatGradients {
  std::vector<Vec3> d_color;
  std::vector<double> d_opacity;
};

namespace detail {

// Screen-space evaluation floor: keeps projected footprints at least a
// fraction of a pixel wide so sub-pixel Gaussians neither alias nor go
// singular.
constexpr double kLowPassFloor = 0.3;
constexpr double kAlphaCeiling = 0.999;
constexpr double kAlphaFloor = 1e-3;  // below this coverage, depth is sentinel
constexpr double kBBoxSigma = 3.5;
constexpr int kTileSize = 16;

struct ScreenGaussian {
  int id = 0;            // index into the cloud
  Vec2 mean;             // continuous pixel coordinates
  Mat2 inv_cov;
  double depth = 0.0;
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel bbox, empty when x1 < x0
};

/// Projects Gaussians in the given composite order; unprojectable entries are
/// dropped and counted. Output preserves the input order.
inline std::vector<ScreenGaussian> project_gaussians(const GaussianCloud& cloud,
                                                     const std::vector<int>& order,
                                                     const CameraView& cam,
                                                     SplatRenderStats* stats) {
  std::vector<ScreenGaussian> out;
  out.reserve(order.size());
  SplatRenderStats local;
  for (int id : order) {
    const Gaussian& g = cloud.gaussians[static_cast<size_t>(id)];
    const Vec3 pc = cam.to_camera(g.mu);
    if (!(pc.z() > 1e-6)) {
      ++local.skipped_behind;
      continue;
    }
    const double z = pc.z();
    Eigen::Matrix<double, 2, 3> jac;
    jac << cam.fx / z, 0.0, -cam.fx * pc.x() / (z * z),
           0.0, cam.fy / z, -cam.fy * pc.y() / (z * z);
    const Mat3 cov_cam = cam.rotation * covariance(g) * cam.rotation.transpose();
    Mat2 cov2 = jac * cov_cam * jac.transpose();
    cov2(0, 0) += kLowPassFloor;
    cov2(1, 1) += kLowPassFloor;
    const double det = cov2(0, 0) * cov2(1, 1) - cov2(0, 1) * cov2(1, 0);
    if (!(det > 1e-12) || !cov2.allFinite()) {
      ++local.skipped_singular;
      continue;
    }
    ScreenGaussian sg;
    sg.id = id;
    sg.depth = z;
    sg.mean = Vec2(cam.fx * pc.x() / z + cam.cx, cam.fy * pc.y() / z + cam.cy);
    sg.inv_cov << cov2(1, 1) / det, -cov2(0, 1) / det, -cov2(1, 0) / det, cov2(0, 0) / det;
    const double half_trace = 0.5 * (cov2(0, 0) + cov2(1, 1));
    const double disc = std::sqrt(std::max(0.0, half_trace * half_trace - det));
    const double radius = kBBoxSigma * std::sqrt(half_trace + disc);
    // Pixel centers sit at half-integers; the bbox covers centers within
    // `radius` of the mean. It depends only on geometry, never on color or
    // opacity, so gradients stay exact under finite perturbation of either.
    sg.x0 = std::max(0, static_cast<int>(std::ceil(sg.mean.x() - radius - 0.5)));
    sg.x1 = std::min(cam.width - 1, static_cast<int>(std::floor(sg.mean.x() + radius - 0.5)));
    sg.y0 = std::max(0, static_cast<int>(std::ceil(sg.mean.y() - radius - 0.5)));
    sg.y1 = std::min(cam.height - 1, static_cast<int>(std::floor(sg.mean.y() + radius - 0.5)));
    if (sg.x1 < sg.x0 || sg.y1 < sg.y0) continue;
    out.push_back(sg);
  }
  if (stats) {
    stats->skipped_singular += local.skipped_singular;
    stats->skipped_behind += local.skipped_behind;
  }
  return out;
}

struct TileGrid {
  int tiles_x = 0, tiles_y = 0;
  std::vector<std::vector<int>> lists;  // per tile, indices into the screen list, depth order
};

inline TileGrid bin_to_tiles(const std::vector<ScreenGaussian>& screen, int width, int height) {
  TileGrid grid;
  grid.tiles_x = (width + kTileSize - 1) / kTileSize;
  grid.tiles_y = (height + kTileSize - 1) / kTileSize;
  grid.lists.resize(static_cast<size_t>(grid.tiles_x) * grid.tiles_y);
  for (size_t s = 0; s < screen.size(); ++s) {
    const ScreenGaussian& sg = screen[s];
    const int tx0 = sg.x0 / kTileSize, tx1 = sg.x1 / kTileSize;
    const int ty0 = sg.y0 / kTileSize, ty1 = sg.y1 / kTileSize;
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx)
        grid.lists[static_cast<size_t>(ty) * grid.tiles_x + tx].push_back(static_cast<int>(s));
  }
  return grid;
}

inline double gaussian_weight(const ScreenGaussian& sg, const Vec2& p) {
  const Vec2 d = p - sg.mean;
  const double q = d.dot(sg.inv_cov * d);
  return std::exp(-0.5 * q);
}

}  // namespace detail

/// Front-to-back alpha compositing of the depth-sorted cloud over a constant
/// background. Per pixel: C = sum_i c_i a_i T_i + background * T_end with
/// T_i = prod_{j<i} (1 - a_j) and a_i the screen-space Gaussian falloff times
/// opacity, clamped to 0.999. Depth is the coverage-weighted mean of the
/// contributing Gaussians' camera depths.
inline GBuffer render(const GaussianCloud& cloud, const CameraView& cam,
                      const Vec3& background = Vec3::Zero(),
                      SplatRenderStats* stats = nullptr) {
  validate_cloud(cloud);
  validate_camera(cam);
  GBuffer gbuf = GBuffer::make(cam.height, cam.width);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x)
      for (int c = 0; c < 3; ++c) gbuf.color(y, x, c) = background[c];

  const std::vector<int> order = sort_front_to_back(cloud, cam);
  const auto screen = detail::project_gaussians(cloud, order, cam, stats);
  const auto grid = detail::bin_to_tiles(screen, cam.width, cam.height);

  const int64_t n_tiles = static_cast<int64_t>(grid.lists.size());
  parallel_chunks(n_tiles, 1, [&](int64_t tile, int64_t, int64_t) {
    const auto& list = grid.lists[static_cast<size_t>(tile)];
    if (list.empty()) return;
    const int tx = static_cast<int>(tile % grid.tiles_x);
    const int ty = static_cast<int>(tile / grid.tiles_x);
    const int px0 = tx * detail::kTileSize;
    const int py0 = ty * detail::kTileSize;
    const int px1 = std::min(cam.width, px0 + detail::kTileSize);
    const int py1 = std::min(cam.height, py0 + detail::kTileSize);
    for (int y = py0; y < py1; ++y)
      for (int x = px0; x < px1; ++x) {
        const Vec2 p = pixel_center(x, y);
        double transmit = 1.0;
        Vec3 color = Vec3::Zero();
        double depth_acc = 0.0;
        for (int s : list) {
          const auto& sg = screen[static_cast<size_t>(s)];
          if (x < sg.x0 || x > sg.x1 || y < sg.y0 || y > sg.y1) continue;
          const Gaussian& g = cloud.gaussians[static_cast<size_t>(sg.id)];
          double a = g.opacity * detail::gaussian_weight(sg, p);
          if (a > detail::kAlphaCeiling) a = detail::kAlphaCeiling;
          const double w = a * transmit;
          color += w * g.color;
          depth_acc += w * sg.depth;
          transmit *= 1.0 - a;
        }
        const double coverage = 1.0 - transmit;
        for (int c = 0; c < 3; ++c) gbuf.color(y, x, c) = color[c] + background[c] * transmit;
        gbuf.alpha(y, x) = coverage;
        if (coverage >= detail::kAlphaFloor) gbuf.depth(y, x) = depth_acc / coverage;
      }
  });
  fill_normals_from_depth(gbuf, cam);
  return gbuf;
}

/// Exact gradients of the compositing above w.r.t. each Gaussian's color and
/// opacity. Accumulation is per tile with a serial fixed-order reduction, so
/// results are bit-identical for any thread count.
inline SplatGradients render_backward(const GaussianCloud& cloud, const CameraView& cam,
                                      const Vec3& background, const Image& dL_dColor) {
  validate_cloud(cloud);
  validate_camera(cam);
  if (dL_dColor.height() != cam.height || dL_dColor.width() != cam.width ||
      dL_dColor.channels() != 3)
    throw std::invalid_argument("render_backward: gradient raster shape mismatch");

  const std::vector<int> order = sort_front_to_back(cloud, cam);
  const auto screen = detail::project_gaussians(cloud, order, cam, nullptr);
  const auto grid = detail::bin_to_tiles(screen, cam.width, cam.height);

  struct TileAcc {
    std::vector<Vec3> d_color;
    std::vector<double> d_opacity;
  };
  std::vector<TileAcc> tile_acc(grid.lists.size());

  struct Contribution {
    int s = 0;
    double alpha = 0.0;
    double falloff = 0.0;  // exp term; d alpha / d opacity unless clamped
    double transmit = 0.0;
  };

  const int64_t n_tiles = static_cast<int64_t>(grid.lists.size());
  parallel_chunks(n_tiles, 1, [&](int64_t tile, int64_t, int64_t) {
    const auto& list = grid.lists[static_cast<size_t>(tile)];
    if (list.empty()) return;
    auto& acc = tile_acc[static_cast<size_t>(tile)];
    acc.d_color.assign(list.size(), Vec3::Zero());
    acc.d_opacity.assign(list.size(), 0.0);
    std::vector<Contribution> stack;

    const int tx = static_cast<int>(tile % grid.tiles_x);
    const int ty = static_cast<int>(tile / grid.tiles_x);
    const int px0 = tx * detail::kTileSize;
    const int py0 = ty * detail::kTileSize;
    const int px1 = std::min(cam.width, px0 + detail::kTileSize);
    const int py1 = std::min(cam.height, py0 + detail::kTileSize);
    for (int y = py0; y < py1; ++y)
      for (int x = px0; x < px1; ++x) {
        const Vec3 up(dL_dColor(y, x, 0), dL_dColor(y, x, 1), dL_dColor(y, x, 2));
        if (up.isZero(0.0)) continue;
        const Vec2 p = pixel_center(x, y);
        stack.clear();
        double transmit = 1.0;
        for (size_t li = 0; li < list.size(); ++li) {
          const auto& sg = screen[static_cast<size_t>(list[li])];
          if (x < sg.x0 || x > sg.x1 || y < sg.y0 || y > sg.y1) continue;
          const Gaussian& g = cloud.gaussians[static_cast<size_t>(sg.id)];
          const double falloff = detail::gaussian_weight(sg, p);
          double a = g.opacity * falloff;
          const bool clamped = a > detail::kAlphaCeiling;
          if (clamped) a = detail::kAlphaCeiling;
          stack.push_back({static_cast<int>(li), a, clamped ? 0.0 : falloff, transmit});
          transmit *= 1.0 - a;
        }
        // Suffix sweep: dC/da_i = c_i T_i - (sum_{k>i} c_k a_k T_k + B T_end) / (1 - a_i).
        Vec3 suffix = background * transmit;
        for (size_t k = stack.size(); k-- > 0;) {
          const Contribution& ct = stack[k];
          const auto& sg = screen[static_cast<size_t>(list[static_cast<size_t>(ct.s)])];
          const Gaussian& g = cloud.gaussians[static_cast<size_t>(sg.id)];
          const Vec3 dC_da = g.color * ct.transmit - suffix / (1.0 - ct.alpha);
          acc.d_color[static_cast<size_t>(ct.s)] += up * (ct.alpha * ct.transmit);
          acc.d_opacity[static_cast<size_t>(ct.s)] += up.dot(dC_da) * ct.falloff;
          suffix += g.color * (ct.alpha * ct.transmit);
        }
      }
  });

  SplatGradients grads;
  grads.d_color.assign(cloud.size(), Vec3::Zero());
  grads.d_opacity.assign(cloud.size(), 0.0);
  for (size_t tile = 0; tile < grid.lists.size(); ++tile) {
    const auto& list = grid.lists[tile];
    const auto& acc = tile_acc[tile];
    if (acc.d_color.empty()) continue;
    for (size_t li = 0; li < list.size(); ++li) {
      const int gid = screen[static_cast<size_t>(list[li])].id;
      grads.d_color[static_cast<size_t>(gid)] += acc.d_color[li];
      grads.d_opacity[static_cast<size_t>(gid)] += acc.d_opacity[li];
    }
  }
  return grads;
}

}  // namespace retex
