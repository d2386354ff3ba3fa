// License: Apache 2.0. See LICENSE file in root directory.
// Copyright(c) 2026 retex contributors. All Rights Reserved.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "retex/gbuffer.hpp"
#include "retex/geometry.hpp"
#include "retex/parallel.hpp"

namespace retex {

/// Triangle mesh with per-vertex normals and UVs plus an RGB texture.
struct TexturedMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;
  std::vector<Vec3> normals;
  std::vector<Vec2> uvs;
  Image texture;  // T_h x T_w x 3, [0,1]
};

inline void validate_mesh(const TexturedMesh& mesh) {
  const int v = static_cast<int>(mesh.vertices.size());
  if (mesh.normals.size() != mesh.vertices.size() || mesh.uvs.size() != mesh.vertices.size())
    throw std::invalid_argument("mesh: per-vertex arrays differ in length");
  for (const auto& f : mesh.faces)
    for (int idx : f)
      if (idx < 0 || idx >= v) throw std::invalid_argument("mesh: face index out of range");
  for (const Vec3& n : mesh.normals)
    if (std::abs(n.norm() - 1.0) > 1e-6)
      throw std::invalid_argument("mesh: normal is not unit within 1e-6");
  for (const Vec2& uv : mesh.uvs)
    if (uv.x() < 0.0 || uv.x() > 1.0 || uv.y() < 0.0 || uv.y() > 1.0)
      throw std::invalid_argument("mesh: uv outside [0,1]");
  if (mesh.texture.channels() != 3 || mesh.texture.height() < 1 || mesh.texture.width() < 1)
    throw std::invalid_argument("mesh: texture must be non-empty RGB");
}

/// Bilinear footprint of a UV sample: four texel indices (row-major, possibly
/// repeated at borders) and weights that always sum to 1.
struct BilinearSample {
  std::array<int, 4> idx;
  std::array<double, 4> w;
};

inline BilinearSample bilinear_footprint(double u, double v, int tw, int th) {
  const double x = u * tw - 0.5;
  const double y = v * th - 0.5;
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;
  auto cx = [&](int i) { return std::clamp(i, 0, tw - 1); };
  auto cy = [&](int i) { return std::clamp(i, 0, th - 1); };
  BilinearSample s;
  s.idx = {cy(y0) * tw + cx(x0), cy(y0) * tw + cx(x0 + 1),
           cy(y0 + 1) * tw + cx(x0), cy(y0 + 1) * tw + cx(x0 + 1)};
  s.w = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  return s;
}

inline Vec3 sample_texture(const Image& tex, double u, double v) {
  const BilinearSample s = bilinear_footprint(u, v, tex.width(), tex.height());
  Vec3 out = Vec3::Zero();
  for (int k = 0; k < 4; ++k) {
    const int ty = s.idx[k] / tex.width();
    const int tx = s.idx[k] % tex.width();
    for (int c = 0; c < 3; ++c) out[c] += s.w[k] * tex(ty, tx, c);
  }
  return out;
}

inline int32_t nearest_texel_id(double u, double v, int tw, int th) {
  const int tx = std::clamp(static_cast<int>(std::floor(u * tw)), 0, tw - 1);
  const int ty = std::clamp(static_cast<int>(std::floor(v * th)), 0, th - 1);
  return static_cast<int32_t>(ty) * tw + tx;
}

namespace detail {

constexpr int kMeshTileSize = 16;
constexpr double kNearPlane = 1e-6;

struct UvBuffer {
  Image uv;  // H x W x 2, -1 sentinel on uncovered pixels
};

/// Z-buffered triangle rasterization with perspective-correct barycentrics.
/// Faces are binned to pixel tiles and tested in face order inside each tile;
/// the strict-less depth test makes the winner independent of tiling and
/// thread count. Zero-area and near-plane-crossing faces are skipped.
inline UvBuffer rasterize_raw(const TexturedMesh& mesh, const CameraView& cam, GBuffer& gbuf) {
  validate_mesh(mesh);
  validate_camera(cam);
  gbuf = GBuffer::make(cam.height, cam.width);
  UvBuffer uvb;
  uvb.uv = Image(cam.height, cam.width, 2, -1.0);

  struct ScreenFace {
    int face = 0;
    Vec2 p[3];
    double inv_z[3];
    double area = 0.0;
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
  };
  std::vector<ScreenFace> screen;
  screen.reserve(mesh.faces.size());
  for (size_t f = 0; f < mesh.faces.size(); ++f) {
    ScreenFace sf;
    sf.face = static_cast<int>(f);
    bool ok = true;
    double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
    for (int k = 0; k < 3; ++k) {
      const Vec3 pc = cam.to_camera(mesh.vertices[static_cast<size_t>(mesh.faces[f][k])]);
      if (!(pc.z() > kNearPlane)) {
        ok = false;
        break;
      }
      sf.p[k] = Vec2(cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy);
      sf.inv_z[k] = 1.0 / pc.z();
      min_x = std::min(min_x, sf.p[k].x());
      max_x = std::max(max_x, sf.p[k].x());
      min_y = std::min(min_y, sf.p[k].y());
      max_y = std::max(max_y, sf.p[k].y());
    }
    if (!ok) continue;
    const Vec2 e01 = sf.p[1] - sf.p[0];
    const Vec2 e02 = sf.p[2] - sf.p[0];
    sf.area = e01.x() * e02.y() - e01.y() * e02.x();
    if (std::abs(sf.area) < 1e-12) continue;
    sf.x0 = std::max(0, static_cast<int>(std::ceil(min_x - 0.5)));
    sf.x1 = std::min(cam.width - 1, static_cast<int>(std::floor(max_x - 0.5)));
    sf.y0 = std::max(0, static_cast<int>(std::ceil(min_y - 0.5)));
    sf.y1 = std::min(cam.height - 1, static_cast<int>(std::floor(max_y - 0.5)));
    if (sf.x1 < sf.x0 || sf.y1 < sf.y0) continue;
    screen.push_back(sf);
  }

  const int tiles_x = (cam.width + kMeshTileSize - 1) / kMeshTileSize;
  const int tiles_y = (cam.height + kMeshTileSize - 1) / kMeshTileSize;
  std::vector<std::vector<int>> lists(static_cast<size_t>(tiles_x) * tiles_y);
  for (size_t s = 0; s < screen.size(); ++s) {
    const auto& sf = screen[s];
    for (int ty = sf.y0 / kMeshTileSize; ty <= sf.y1 / kMeshTileSize; ++ty)
      for (int tx = sf.x0 / kMeshTileSize; tx <= sf.x1 / kMeshTileSize; ++tx)
        lists[static_cast<size_t>(ty) * tiles_x + tx].push_back(static_cast<int>(s));
  }

  parallel_chunks(static_cast<int64_t>(lists.size()), 1, [&](int64_t tile, int64_t, int64_t) {
    const auto& list = lists[static_cast<size_t>(tile)];
    if (list.empty()) return;
    const int tx = static_cast<int>(tile % tiles_x);
    const int ty = static_cast<int>(tile / tiles_x);
    const int px0 = tx * kMeshTileSize;
    const int py0 = ty * kMeshTileSize;
    const int px1 = std::min(cam.width, px0 + kMeshTileSize);
    const int py1 = std::min(cam.height, py0 + kMeshTileSize);
    for (int s : list) {
      const auto& sf = screen[static_cast<size_t>(s)];
      const auto& face = mesh.faces[static_cast<size_t>(sf.face)];
      const int fx0 = std::max(px0, sf.x0), fx1 = std::min(px1 - 1, sf.x1);
      const int fy0 = std::max(py0, sf.y0), fy1 = std::min(py1 - 1, sf.y1);
      for (int y = fy0; y <= fy1; ++y)
        for (int x = fx0; x <= fx1; ++x) {
          const Vec2 p = pixel_center(x, y);
          const double e0 = (sf.p[2].x() - sf.p[1].x()) * (p.y() - sf.p[1].y()) -
                            (sf.p[2].y() - sf.p[1].y()) * (p.x() - sf.p[1].x());
          const double e1 = (sf.p[0].x() - sf.p[2].x()) * (p.y() - sf.p[2].y()) -
                            (sf.p[0].y() - sf.p[2].y()) * (p.x() - sf.p[2].x());
          const double e2 = (sf.p[1].x() - sf.p[0].x()) * (p.y() - sf.p[0].y()) -
                            (sf.p[1].y() - sf.p[0].y()) * (p.x() - sf.p[0].x());
          const double sign = sf.area > 0.0 ? 1.0 : -1.0;
          if (sign * e0 < 0.0 || sign * e1 < 0.0 || sign * e2 < 0.0) continue;
          const double l0 = e0 / sf.area, l1 = e1 / sf.area, l2 = e2 / sf.area;
          const double inv_z = l0 * sf.inv_z[0] + l1 * sf.inv_z[1] + l2 * sf.inv_z[2];
          if (!(inv_z > 0.0)) continue;
          const double z = 1.0 / inv_z;
          if (!(z < gbuf.depth(y, x))) continue;
          const double m0 = l0 * sf.inv_z[0] * z;
          const double m1 = l1 * sf.inv_z[1] * z;
          const double m2 = l2 * sf.inv_z[2] * z;
          Vec3 n = m0 * mesh.normals[static_cast<size_t>(face[0])] +
                   m1 * mesh.normals[static_cast<size_t>(face[1])] +
                   m2 * mesh.normals[static_cast<size_t>(face[2])];
          const double nl = n.norm();
          if (nl > 1e-12) n /= nl;
          const Vec2 uv = m0 * mesh.uvs[static_cast<size_t>(face[0])] +
                          m1 * mesh.uvs[static_cast<size_t>(face[1])] +
                          m2 * mesh.uvs[static_cast<size_t>(face[2])];
          gbuf.depth(y, x) = z;
          gbuf.alpha(y, x) = 1.0;
          for (int c = 0; c < 3; ++c) gbuf.normal(y, x, c) = n[c];
          const double u = std::clamp(uv.x(), 0.0, 1.0);
          const double v = std::clamp(uv.y(), 0.0, 1.0);
          uvb.uv(y, x, 0) = u;
          uvb.uv(y, x, 1) = v;
          gbuf.texel_id(y, x) = nearest_texel_id(u, v, mesh.texture.width(), mesh.texture.height());
        }
    }
  });
  return uvb;
}

}  // namespace detail

/// Renders the mesh: bilinear texture color, camera-space depth, interpolated
/// unit normal, and the nearest texel id per covered pixel.
inline GBuffer rasterize(const TexturedMesh& mesh, const CameraView& cam) {
  GBuffer gbuf;
  const detail::UvBuffer uvb = detail::rasterize_raw(mesh, cam, gbuf);
  for (int y = 0; y < gbuf.height(); ++y)
    for (int x = 0; x < gbuf.width(); ++x) {
      if (gbuf.alpha(y, x) == 0.0) continue;
      const Vec3 c = sample_texture(mesh.texture, uvb.uv(y, x, 0), uvb.uv(y, x, 1));
      for (int ch = 0; ch < 3; ++ch) gbuf.color(y, x, ch) = c[ch];
    }
  return gbuf;
}

}  // namespace retex
