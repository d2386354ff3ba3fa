// License: Apache 2.0. See LICENSE file in root directory.
// Copyright(c) 2026 retex contributors. All Rights Reserved.

#pragma once

#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "retex/gbuffer.hpp"
#include "retex/parallel.hpp"

namespace retex {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;

constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double d) { return d * kPi / 180.0; }

/// Pinhole camera. rotation/translation map world to camera space; the camera
/// looks down +z with image y pointing down (right-handed frame).
/// azimuth/elevation are bookkeeping for the view scheduler only.
struct CameraView {
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  int width = 1, height = 1;
  double azimuth = 0.0, elevation = 0.0;

  Vec3 to_camera(const Vec3& p) const { return rotation * p + translation; }
  Vec3 to_world(const Vec3& pc) const { return rotation.transpose() * (pc - translation); }
  Vec3 eye() const { return -(rotation.transpose() * translation); }
  Vec3 forward() const { return rotation.row(2).transpose(); }
};

inline void validate_camera(const CameraView& cam) {
  if (!(cam.fx > 0.0) || !(cam.fy > 0.0))
    throw std::invalid_argument("camera: focal lengths must be positive");
  if (cam.width < 1 || cam.height < 1)
    throw std::invalid_argument("camera: image size must be at least 1x1");
  const Mat3 gram = cam.rotation.transpose() * cam.rotation;
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9)
    throw std::invalid_argument("camera: rotation is not orthonormal within 1e-9");
  if (!cam.translation.allFinite() || !cam.rotation.allFinite())
    throw std::invalid_argument("camera: non-finite pose");
}

/// Orbit camera on a sphere of given radius around a target point.
/// Azimuth 0, elevation 0 places the eye at target - (0,0,radius) looking +z;
/// positive azimuth moves the eye toward world +x. fov is the vertical field
/// of view in degrees.
inline CameraView make_orbit_camera(double azimuth_deg, double elevation_deg, double radius,
                                    double fov_deg, int width, int height,
                                    const Vec3& target = Vec3::Zero()) {
  if (!(radius > 0.0)) throw std::invalid_argument("orbit camera: radius must be positive");
  if (!(fov_deg > 0.0) || !(fov_deg < 180.0))
    throw std::invalid_argument("orbit camera: fov must be in (0, 180)");
  const double az = deg_to_rad(azimuth_deg);
  const double el = deg_to_rad(elevation_deg);
  const Vec3 offset(std::cos(el) * std::sin(az), std::sin(el), -std::cos(el) * std::cos(az));
  const Vec3 eye = target + radius * offset;

  const Vec3 z = (target - eye).normalized();
  Vec3 up(0.0, 1.0, 0.0);
  if (std::abs(z.dot(up)) > 0.999) up = Vec3(0.0, 0.0, 1.0);
  const Vec3 x = z.cross(up).normalized();
  const Vec3 y = z.cross(x);

  CameraView cam;
  cam.rotation.row(0) = x.transpose();
  cam.rotation.row(1) = y.transpose();
  cam.rotation.row(2) = z.transpose();
  cam.translation = -(cam.rotation * eye);
  cam.width = width;
  cam.height = height;
  cam.fy = 0.5 * height / std::tan(0.5 * deg_to_rad(fov_deg));
  cam.fx = cam.fy;
  cam.cx = 0.5 * width;
  cam.cy = 0.5 * height;
  cam.azimuth = azimuth_deg;
  cam.elevation = elevation_deg;
  validate_camera(cam);
  return cam;
}

struct PixelDepth {
  Vec2 pixel;    // continuous; pixel (ix,iy) covers [ix,ix+1)x[iy,iy+1)
  double depth;  // camera-space z
};

/// Projects a world point. Empty when the point is at or behind the camera
/// plane; the pixel may lie outside the image bounds (caller clips).
inline std::optional<PixelDepth> project(const Vec3& point, const CameraView& cam) {
  if (!point.allFinite()) throw std::invalid_argument("project: non-finite point");
  const Vec3 pc = cam.to_camera(point);
  if (!(pc.z() > 0.0)) return std::nullopt;
  PixelDepth out;
  out.pixel = Vec2(cam.fx * pc.x() / pc.z() + cam.cx, cam.fy * pc.y() / pc.z() + cam.cy);
  out.depth = pc.z();
  return out;
}

/// Scales the camera ray through `pixel` so that camera-space z equals depth.
inline Vec3 back_project(const Vec2& pixel, double depth, const CameraView& cam) {
  if (!(depth > 0.0)) throw std::invalid_argument("back_project: depth must be positive");
  const Vec3 dir((pixel.x() - cam.cx) / cam.fx, (pixel.y() - cam.cy) / cam.fy, 1.0);
  return cam.to_world(dir * depth);
}

/// Unit direction from the camera eye through `pixel`, in world space.
inline Vec3 pixel_ray(const Vec2& pixel, const CameraView& cam) {
  const Vec3 dir((pixel.x() - cam.cx) / cam.fx, (pixel.y() - cam.cy) / cam.fy, 1.0);
  return (cam.rotation.transpose() * dir).normalized();
}

/// Points with an optional per-point payload of up to kMaxAttrDim scalars
/// (normals, colors, per-pixel statistics carried through reprojection).
struct PointCloud3D {
  static constexpr int kMaxAttrDim = 3;

  std::vector<Vec3> points;
  std::vector<double> attributes;  // flat, points.size() * attr_dim
  int attr_dim = 0;

  size_t size() const { return points.size(); }

  void add(const Vec3& p) { points.push_back(p); }

  void add(const Vec3& p, const double* attr, int dim) {
    if (attr_dim == 0 && points.empty()) attr_dim = dim;
    if (dim != attr_dim) throw std::invalid_argument("point cloud: attribute dimension mismatch");
    points.push_back(p);
    attributes.insert(attributes.end(), attr, attr + dim);
  }
};

inline void validate_point_cloud(const PointCloud3D& pts) {
  if (pts.attr_dim < 0 || pts.attr_dim > PointCloud3D::kMaxAttrDim)
    throw std::invalid_argument("point cloud: attribute dimension out of range");
  if (pts.attributes.size() != pts.points.size() * static_cast<size_t>(pts.attr_dim))
    throw std::invalid_argument("point cloud: points and attributes have different lengths");
  for (const Vec3& p : pts.points)
    if (!p.allFinite()) throw std::invalid_argument("point cloud: non-finite coordinate");
  for (double a : pts.attributes)
    if (!std::isfinite(a)) throw std::invalid_argument("point cloud: non-finite attribute");
}

/// Z-buffered point rendering. Each point covers a (2*radius+1)^2 pixel block
/// around its projection; the nearest point wins per pixel, ties break by
/// point index, so the result is independent of traversal order. Attribute
/// channels land in the color planes; uncovered pixels keep sentinels.
inline GBuffer splat_points(const PointCloud3D& pts, const CameraView& cam, int radius = 1) {
  validate_point_cloud(pts);
  if (radius < 0) throw std::invalid_argument("splat_points: negative radius");
  GBuffer gbuf = GBuffer::make(cam.height, cam.width);
  const int64_t n = static_cast<int64_t>(pts.size());
  if (n == 0) return gbuf;

  struct Projected {
    int px = 0, py = 0;
    double depth = 0.0;
    bool valid = false;
  };
  std::vector<Projected> proj(static_cast<size_t>(n));
  parallel_chunks(n, 4096, [&](int64_t, int64_t begin, int64_t end) {
    for (int64_t i = begin; i < end; ++i) {
      const auto pd = project(pts.points[static_cast<size_t>(i)], cam);
      if (!pd) continue;
      auto& pr = proj[static_cast<size_t>(i)];
      pr.px = static_cast<int>(std::floor(pd->pixel.x()));
      pr.py = static_cast<int>(std::floor(pd->pixel.y()));
      pr.depth = pd->depth;
      pr.valid = true;
    }
  });

  // Packed z-buffer key: float32 depth bits above the point index. Positive
  // float bit patterns order like the floats, so atomic min resolves both the
  // depth test and the index tie-break in one word.
  constexpr uint64_t kEmpty = ~0ull;
  const int64_t n_pixels = static_cast<int64_t>(cam.width) * cam.height;
  std::unique_ptr<std::atomic<uint64_t>[]> keys(new std::atomic<uint64_t>[n_pixels]);
  for (int64_t i = 0; i < n_pixels; ++i) keys[i].store(kEmpty, std::memory_order_relaxed);

  parallel_chunks(n, 4096, [&](int64_t, int64_t begin, int64_t end) {
    for (int64_t i = begin; i < end; ++i) {
      const auto& pr = proj[static_cast<size_t>(i)];
      if (!pr.valid) continue;
      const uint32_t depth_bits = std::bit_cast<uint32_t>(static_cast<float>(pr.depth));
      const uint64_t key = (static_cast<uint64_t>(depth_bits) << 32) | static_cast<uint32_t>(i);
      for (int dy = -radius; dy <= radius; ++dy) {
        const int y = pr.py + dy;
        if (y < 0 || y >= cam.height) continue;
        for (int dx = -radius; dx <= radius; ++dx) {
          const int x = pr.px + dx;
          if (x < 0 || x >= cam.width) continue;
          auto& slot = keys[static_cast<int64_t>(y) * cam.width + x];
          uint64_t cur = slot.load(std::memory_order_relaxed);
          while (key < cur && !slot.compare_exchange_weak(cur, key, std::memory_order_relaxed)) {
          }
        }
      }
    }
  });

  parallel_chunks(n_pixels, 8192, [&](int64_t, int64_t begin, int64_t end) {
    for (int64_t p = begin; p < end; ++p) {
      const uint64_t key = keys[p].load(std::memory_order_relaxed);
      if (key == kEmpty) continue;
      const auto idx = static_cast<size_t>(key & 0xffffffffull);
      const int y = static_cast<int>(p / cam.width);
      const int x = static_cast<int>(p % cam.width);
      gbuf.depth(y, x) = proj[idx].depth;
      gbuf.alpha(y, x) = 1.0;
      for (int c = 0; c < pts.attr_dim; ++c)
        gbuf.color(y, x, c) = pts.attributes[idx * pts.attr_dim + c];
    }
  });
  return gbuf;
}

inline Vec2 pixel_center(int x, int y) { return Vec2(x + 0.5, y + 0.5); }

/// Angle term per pixel: max(0, n-hat dot toward-camera direction). Pixels
/// without a normal read 0. The view direction comes from the pixel ray, so
/// no depth is needed.
inline Image cos_theta_map(const GBuffer& gbuf, const CameraView& cam) {
  Image out(gbuf.height(), gbuf.width(), 1, 0.0);
  for (int y = 0; y < gbuf.height(); ++y)
    for (int x = 0; x < gbuf.width(); ++x) {
      if (!gbuf.has_normal(y, x)) continue;
      const Vec3 n(gbuf.normal(y, x, 0), gbuf.normal(y, x, 1), gbuf.normal(y, x, 2));
      const Vec3 v = pixel_ray(pixel_center(x, y), cam);
      out(y, x) = std::max(0.0, n.dot(-v));
    }
  return out;
}

/// Fills the normal planes from screen-space depth gradients: cross product
/// of the back-projected position differences along x and y, oriented toward
/// the camera. Fallback for renderers whose primitives carry no normals.
inline void fill_normals_from_depth(GBuffer& gbuf, const CameraView& cam) {
  const int h = gbuf.height(), w = gbuf.width();
  auto position = [&](int y, int x) {
    return back_project(pixel_center(x, y), gbuf.depth(y, x), cam);
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!gbuf.has_depth(y, x)) continue;
      const int xl = (x > 0 && gbuf.has_depth(y, x - 1)) ? x - 1 : x;
      const int xr = (x + 1 < w && gbuf.has_depth(y, x + 1)) ? x + 1 : x;
      const int yu = (y > 0 && gbuf.has_depth(y - 1, x)) ? y - 1 : y;
      const int yd = (y + 1 < h && gbuf.has_depth(y + 1, x)) ? y + 1 : y;
      if (xl == xr || yu == yd) continue;
      const Vec3 dx = position(y, xr) - position(y, xl);
      const Vec3 dy = position(yd, x) - position(yu, x);
      Vec3 n = dx.cross(dy);
      const double len = n.norm();
      if (!(len > 1e-12)) continue;
      n /= len;
      const Vec3 p = position(y, x);
      if (n.dot(cam.eye() - p) < 0.0) n = -n;
      for (int c = 0; c < 3; ++c) gbuf.normal(y, x, c) = n[c];
    }
}

}  // namespace retex
