// License: Apache 2.0. See LICENSE file in root directory.
// Copyright(c) 2026 retex contributors. All Rights Reserved.

#pragma once

#include <cmath>
#include <cstdint>

#include "retex/mesh.hpp"
#include "retex/rng.hpp"
#include "retex/splat.hpp"

namespace retex {

/// Checkerboard with a horizontal hue ramp so every azimuth band looks
/// different; keeps values away from 0/1 so optimizer clamps stay inactive.
inline Image make_checker_texture(int size = 256, int tiles = 8) {
  Image tex(size, size, 3, 0.0);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const int cell = (x * tiles / size + y * tiles / size) % 2;
      const double ramp = static_cast<double>(x) / size;
      tex(y, x, 0) = cell ? 0.75 : 0.20 + 0.4 * ramp;
      tex(y, x, 1) = cell ? 0.55 - 0.3 * ramp : 0.65;
      tex(y, x, 2) = cell ? 0.25 + 0.5 * ramp : 0.35;
    }
  return tex;
}

/// UV sphere at the origin. Rows duplicate the seam column (u=0 and u=1) so
/// texture coordinates stay in [0,1] without wrapping; normals are exact.
inline TexturedMesh make_sphere_mesh(double radius = 1.0, int stacks = 48, int slices = 96,
                                     Image texture = {}) {
  if (stacks < 2 || slices < 3) throw std::invalid_argument("sphere mesh: too few subdivisions");
  TexturedMesh mesh;
  mesh.texture = texture.empty() ? make_checker_texture() : std::move(texture);
  for (int i = 0; i <= stacks; ++i) {
    const double v = static_cast<double>(i) / stacks;
    const double el = kPi * (0.5 - v);  // +pi/2 (top) .. -pi/2 (bottom)
    for (int j = 0; j <= slices; ++j) {
      const double u = static_cast<double>(j) / slices;
      const double az = 2.0 * kPi * u;
      const Vec3 n(std::cos(el) * std::sin(az), std::sin(el), -std::cos(el) * std::cos(az));
      mesh.vertices.push_back(radius * n);
      mesh.normals.push_back(n);
      mesh.uvs.emplace_back(u, v);
    }
  }
  const int cols = slices + 1;
  for (int i = 0; i < stacks; ++i)
    for (int j = 0; j < slices; ++j) {
      const int a = i * cols + j;
      const int b = a + 1;
      const int c = a + cols;
      const int d = c + 1;
      if (i > 0) mesh.faces.push_back({a, b, c});
      if (i + 1 < stacks) mesh.faces.push_back({b, d, c});
    }
  validate_mesh(mesh);
  return mesh;
}

/// Axis-aligned cube with per-face normals and a shared texture atlas
/// (all six faces map onto the full texture). 24 vertices, 12 faces.
inline TexturedMesh make_cube_mesh(double half_extent = 1.0, Image texture = {}) {
  TexturedMesh mesh;
  mesh.texture = texture.empty() ? make_checker_texture() : std::move(texture);
  const double h = half_extent;
  const Vec3 axes[6] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
  for (const Vec3& n : axes) {
    // Build an orthonormal frame (n, s, t) per face.
    const Vec3 s = std::abs(n.x()) > 0.5 ? Vec3(0, 1, 0) : Vec3(1, 0, 0);
    const Vec3 t = n.cross(s);
    const int base = static_cast<int>(mesh.vertices.size());
    const Vec2 uv[4] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    const double su[4] = {-1, 1, 1, -1};
    const double tv[4] = {-1, -1, 1, 1};
    for (int k = 0; k < 4; ++k) {
      mesh.vertices.push_back(h * (n + su[k] * s + tv[k] * t));
      mesh.normals.push_back(n);
      mesh.uvs.push_back(uv[k]);
    }
    mesh.faces.push_back({base, base + 1, base + 2});
    mesh.faces.push_back({base, base + 2, base + 3});
  }
  validate_mesh(mesh);
  return mesh;
}

/// One triangle in the z = z_plane plane, facing -z, UVs spanning the texture.
inline TexturedMesh make_triangle_mesh(double size = 1.0, double z_plane = 0.0,
                                       Image texture = {}) {
  TexturedMesh mesh;
  mesh.texture = texture.empty() ? make_checker_texture(64, 4) : std::move(texture);
  mesh.vertices = {Vec3(-size, -size, z_plane), Vec3(size, -size, z_plane),
                   Vec3(0.0, size, z_plane)};
  mesh.normals = {Vec3(0, 0, -1), Vec3(0, 0, -1), Vec3(0, 0, -1)};
  mesh.uvs = {Vec2(0.0, 1.0), Vec2(1.0, 1.0), Vec2(0.5, 0.0)};
  mesh.faces = {{0, 1, 2}};
  validate_mesh(mesh);
  return mesh;
}

/// Splat cloud on a sphere surface: Fibonacci-distributed points, pancake
/// Gaussians tangent to the surface, colors sampled from the same texture
/// parameterization as make_sphere_mesh.
inline GaussianCloud make_sphere_cloud(int count = 1500, double radius = 1.0,
                                       const Image* texture = nullptr, uint64_t seed = 7) {
  if (count < 1) throw std::invalid_argument("sphere cloud: count must be positive");
  const Image tex = texture ? *texture : make_checker_texture();
  GaussianCloud cloud;
  cloud.gaussians.reserve(static_cast<size_t>(count));
  Rng rng(seed);
  const double golden = kPi * (3.0 - std::sqrt(5.0));
  const double spacing = radius * std::sqrt(4.0 * kPi / count);
  for (int i = 0; i < count; ++i) {
    const double y = 1.0 - 2.0 * (i + 0.5) / count;  // sin(elevation)
    const double r_ring = std::sqrt(std::max(0.0, 1.0 - y * y));
    const double az = std::fmod(golden * i, 2.0 * kPi);
    const Vec3 n(r_ring * std::sin(az), y, -r_ring * std::cos(az));

    Gaussian g;
    g.mu = radius * n;
    g.scale = Vec3(0.45 * spacing, 0.45 * spacing, 0.12 * spacing);
    // Quaternion rotating +z onto the outward normal: axis = z x n.
    const Vec3 z(0, 0, 1);
    const Vec3 axis = z.cross(n);
    const double axis_len = axis.norm();
    if (axis_len < 1e-12) {
      g.rotation = n.z() > 0 ? Vec4(1, 0, 0, 0) : Vec4(0, 1, 0, 0);
    } else {
      const double angle = std::atan2(axis_len, z.dot(n));
      const Vec3 a = axis / axis_len;
      const double s = std::sin(0.5 * angle);
      g.rotation = Vec4(std::cos(0.5 * angle), s * a.x(), s * a.y(), s * a.z());
      g.rotation.normalize();
    }
    const double u = std::atan2(n.x(), -n.z()) / (2.0 * kPi);
    const double v = 0.5 - std::asin(std::clamp(y, -1.0, 1.0)) / kPi;
    g.color = sample_texture(tex, u < 0.0 ? u + 1.0 : u, v);
    for (int c = 0; c < 3; ++c) g.color[c] = clamp01(g.color[c] + 0.02 * rng.normal());
    g.opacity = 0.9;
    cloud.gaussians.push_back(g);
  }
  validate_cloud(cloud);
  return cloud;
}

}  // namespace retex
