// License: Apache 2.0. See LICENSE file in root directory.
// Copyright(c) 2026 retex contributors. All Rights Reserved.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "retex/error.hpp"
#include "retex/io_image.hpp"
#include "retex/mesh.hpp"
#include "retex/splat.hpp"

namespace retex {

// Zeroth spherical-harmonic basis constant; rgb = 0.5 + C0 * f_dc.
constexpr double kShDcBasis = 0.28209479177;

namespace detail {

constexpr const char* kPlyFields[] = {"x",     "y",     "z",     "scale_0", "scale_1",
                                      "scale_2", "rot_0", "rot_1", "rot_2",  "rot_3",
                                      "f_dc_0",  "f_dc_1", "f_dc_2", "opacity"};
constexpr int kPlyFieldCount = 14;

inline double logit(double p) { return std::log(p / (1.0 - p)); }
inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

}  // namespace detail

/// Binary little-endian PLY in the common splat interchange layout: log
/// scales, wxyz quaternion, DC spherical-harmonic color, logit opacity.
inline void save_gaussians(const std::string& path, const GaussianCloud& cloud) {
  validate_cloud(cloud);
  detail::FilePtr file = detail::open_file(path, "wb");
  std::string header = "ply\nformat binary_little_endian 1.0\nelement vertex " +
                       std::to_string(cloud.size()) + "\n";
  for (const char* f : detail::kPlyFields) header += std::string("property float ") + f + "\n";
  header += "end_header\n";
  if (std::fwrite(header.data(), 1, header.size(), file.get()) != header.size())
    throw IoError("save_gaussians: short write to '" + path + "'");

  // Opacity saturates the logit at the interval ends; the clamp keeps the
  // stored value finite and costs less than 1e-9 on the round trip.
  constexpr double kOpacityClamp = 1e-9;
  std::array<float, detail::kPlyFieldCount> rec;
  for (const Gaussian& g : cloud.gaussians) {
    const double o = std::clamp(g.opacity, kOpacityClamp, 1.0 - kOpacityClamp);
    int i = 0;
    for (int k = 0; k < 3; ++k) rec[i++] = static_cast<float>(g.mu[k]);
    for (int k = 0; k < 3; ++k) rec[i++] = static_cast<float>(std::log(g.scale[k]));
    for (int k = 0; k < 4; ++k) rec[i++] = static_cast<float>(g.rotation[k]);
    for (int k = 0; k < 3; ++k)
      rec[i++] = static_cast<float>((g.color[k] - 0.5) / kShDcBasis);
    rec[i++] = static_cast<float>(detail::logit(o));
    if (std::fwrite(rec.data(), sizeof(float), rec.size(), file.get()) != rec.size())
      throw IoError("save_gaussians: short write to '" + path + "'");
  }
}

/// Loads the layout written by save_gaussians. Properties are located by
/// name, so any column order works; f_rest_* bands are skipped with a
/// warning. Malformed headers, missing properties, and non-finite values
/// raise IoError with the failing byte offset.
inline GaussianCloud load_gaussians(const std::string& path,
                                    std::vector<std::string>* warnings = nullptr) {
  detail::FilePtr file = detail::open_file(path, "rb");
  int64_t offset = 0;
  auto read_line = [&]() {
    std::string line;
    int ch;
    while ((ch = std::fgetc(file.get())) != EOF) {
      ++offset;
      if (ch == '\n') return line;
      if (ch != '\r') line.push_back(static_cast<char>(ch));
    }
    throw IoError("load_gaussians: unexpected end of header in '" + path + "'", offset);
  };

  if (read_line() != "ply") throw IoError("load_gaussians: missing ply magic in '" + path + "'", 0);
  if (read_line() != "format binary_little_endian 1.0")
    throw IoError("load_gaussians: only binary little-endian 1.0 is supported", 4);

  int64_t count = -1;
  std::vector<std::string> props;
  bool rest_seen = false;
  for (;;) {
    const int64_t line_offset = offset;
    const std::string line = read_line();
    if (line == "end_header") break;
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    if (word == "comment") continue;
    if (word == "element") {
      std::string name;
      ss >> name >> count;
      if (name != "vertex" || count < 0)
        throw IoError("load_gaussians: expected 'element vertex <count>'", line_offset);
      continue;
    }
    if (word == "property") {
      std::string type, name;
      ss >> type >> name;
      if (type != "float" && type != "float32")
        throw IoError("load_gaussians: unsupported property type '" + type + "'", line_offset);
      if (name.rfind("f_rest_", 0) == 0) rest_seen = true;
      props.push_back(name);
      continue;
    }
    throw IoError("load_gaussians: unrecognized header line '" + line + "'", line_offset);
  }
  if (count < 0) throw IoError("load_gaussians: no vertex element in '" + path + "'", offset);
  if (rest_seen && warnings)
    warnings->push_back("higher spherical-harmonic bands (f_rest_*) ignored");

  std::array<int, detail::kPlyFieldCount> column;
  for (int f = 0; f < detail::kPlyFieldCount; ++f) {
    column[f] = -1;
    for (size_t p = 0; p < props.size(); ++p)
      if (props[p] == detail::kPlyFields[f]) column[f] = static_cast<int>(p);
    if (column[f] < 0)
      throw IoError(std::string("load_gaussians: missing property '") + detail::kPlyFields[f] + "'",
                    offset);
  }

  const size_t stride = props.size();
  std::vector<float> rec(stride);
  GaussianCloud cloud;
  cloud.gaussians.reserve(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) {
    const int64_t rec_offset = offset;
    if (std::fread(rec.data(), sizeof(float), stride, file.get()) != stride)
      throw IoError("load_gaussians: truncated vertex data in '" + path + "'", rec_offset);
    offset += static_cast<int64_t>(stride * sizeof(float));
    auto field = [&](int f) -> double {
      const double v = rec[static_cast<size_t>(column[f])];
      if (!std::isfinite(v))
        throw IoError(std::string("load_gaussians: non-finite value in property '") +
                          detail::kPlyFields[f] + "'",
                      rec_offset + column[f] * static_cast<int64_t>(sizeof(float)));
      return v;
    };
    Gaussian g;
    g.mu = Vec3(field(0), field(1), field(2));
    g.scale = Vec3(std::exp(field(3)), std::exp(field(4)), std::exp(field(5)));
    g.rotation = Vec4(field(6), field(7), field(8), field(9));
    const double qn = g.rotation.norm();
    if (!(qn > 1e-12))
      throw IoError("load_gaussians: zero quaternion", rec_offset + column[6] * 4);
    g.rotation /= qn;
    for (int k = 0; k < 3; ++k) g.color[k] = clamp01(0.5 + kShDcBasis * field(10 + k));
    g.opacity = detail::sigmoid(field(13));
    cloud.gaussians.push_back(g);
  }
  validate_cloud(cloud);
  return cloud;
}

/// OBJ + MTL + PNG texture. Vertices are written unified (one index per
/// corner); the texture lands next to the OBJ under texture_name.
inline void save_mesh(const std::string& path, const TexturedMesh& mesh,
                      std::string texture_name = "") {
  validate_mesh(mesh);
  const std::filesystem::path obj_path(path);
  const std::string stem = obj_path.stem().string();
  if (texture_name.empty()) texture_name = stem + "_texture.png";
  const std::filesystem::path mtl_path = obj_path.parent_path() / (stem + ".mtl");
  const std::filesystem::path tex_path = obj_path.parent_path() / texture_name;

  std::ofstream mtl(mtl_path);
  if (!mtl) throw IoError("save_mesh: cannot open '" + mtl_path.string() + "'");
  mtl << "newmtl material_0\nKd 1 1 1\nmap_Kd " << texture_name << "\n";
  mtl.close();
  write_png(tex_path.string(), mesh.texture);

  std::ofstream obj(obj_path);
  if (!obj) throw IoError("save_mesh: cannot open '" + path + "'");
  obj << "mtllib " << mtl_path.filename().string() << "\n";
  obj.precision(9);
  for (const Vec3& v : mesh.vertices) obj << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
  for (const Vec2& t : mesh.uvs) obj << "vt " << t.x() << " " << 1.0 - t.y() << "\n";
  for (const Vec3& n : mesh.normals)
    obj << "vn " << n.x() << " " << n.y() << " " << n.z() << "\n";
  obj << "usemtl material_0\n";
  for (const auto& f : mesh.faces)
    obj << "f " << f[0] + 1 << "/" << f[0] + 1 << "/" << f[0] + 1 << " " << f[1] + 1 << "/"
        << f[1] + 1 << "/" << f[1] + 1 << " " << f[2] + 1 << "/" << f[2] + 1 << "/" << f[2] + 1
        << "\n";
  if (!obj) throw IoError("save_mesh: short write to '" + path + "'");
}

namespace detail {

struct ObjIndex {
  int v = 0, vt = 0, vn = 0;
  bool operator<(const ObjIndex& o) const {
    return std::tie(v, vt, vn) < std::tie(o.v, o.vt, o.vn);
  }
};

inline ObjIndex parse_obj_corner(const std::string& token, size_t line_no) {
  ObjIndex idx;
  int parts[3] = {0, 0, 0};
  int part = 0;
  std::string cur;
  for (size_t i = 0; i <= token.size(); ++i) {
    if (i == token.size() || token[i] == '/') {
      if (!cur.empty()) {
        try {
          parts[part] = std::stoi(cur);
        } catch (const std::exception&) {
          throw IoError("load_mesh: bad face index '" + token + "' on line " +
                        std::to_string(line_no));
        }
      }
      cur.clear();
      ++part;
      if (part > 3) throw IoError("load_mesh: bad face token '" + token + "'");
    } else {
      cur.push_back(token[i]);
    }
  }
  idx.v = parts[0];
  idx.vt = parts[1];
  idx.vn = parts[2];
  return idx;
}

}  // namespace detail

/// Loads OBJ with its MTL texture. Polygons are fan-triangulated, corner
/// index tuples are unified into per-vertex data, normals are computed from
/// face geometry when absent. Textured geometry without UVs is rejected.
inline TexturedMesh load_mesh(const std::string& path,
                              std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path);
  if (!in) throw IoError("load_mesh: cannot open '" + path + "'");
  const std::filesystem::path base = std::filesystem::path(path).parent_path();

  std::vector<Vec3> positions;
  std::vector<Vec2> texcoords;
  std::vector<Vec3> normals;
  std::vector<std::array<detail::ObjIndex, 3>> tri_corners;
  std::string texture_file;
  std::string line;
  size_t line_no = 0;
  bool any_content = false;

  auto resolve = [&](int idx, size_t n, const char* what) -> int {
    int r = idx > 0 ? idx - 1 : static_cast<int>(n) + idx;
    if (idx == 0 || r < 0 || r >= static_cast<int>(n))
      throw IoError("load_mesh: " + std::string(what) + " index out of range in '" + path + "'");
    return r;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    any_content = true;
    if (tag == "v") {
      double x, y, z;
      if (!(ss >> x >> y >> z)) throw IoError("load_mesh: bad vertex on line " + std::to_string(line_no));
      positions.emplace_back(x, y, z);
    } else if (tag == "vt") {
      double u, v;
      if (!(ss >> u >> v)) throw IoError("load_mesh: bad texcoord on line " + std::to_string(line_no));
      texcoords.emplace_back(u, 1.0 - v);
    } else if (tag == "vn") {
      double x, y, z;
      if (!(ss >> x >> y >> z)) throw IoError("load_mesh: bad normal on line " + std::to_string(line_no));
      normals.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<detail::ObjIndex> corners;
      std::string tok;
      while (ss >> tok) corners.push_back(detail::parse_obj_corner(tok, line_no));
      if (corners.size() < 3)
        throw IoError("load_mesh: face with fewer than 3 corners on line " + std::to_string(line_no));
      for (size_t k = 2; k < corners.size(); ++k)
        tri_corners.push_back({corners[0], corners[k - 1], corners[k]});
    } else if (tag == "mtllib") {
      std::string mtl_name;
      ss >> mtl_name;
      std::ifstream mtl(base / mtl_name);
      if (!mtl) throw IoError("load_mesh: cannot open material file '" + mtl_name + "'");
      std::string mline;
      while (std::getline(mtl, mline)) {
        std::istringstream ms(mline);
        std::string mtag;
        if (!(ms >> mtag)) continue;
        if (mtag == "map_Kd") ms >> texture_file;
      }
    }
    // usemtl / o / g / s lines carry no geometry and are skipped.
  }
  if (!any_content) throw IoError("load_mesh: '" + path + "' is empty");
  if (positions.empty() || tri_corners.empty())
    throw IoError("load_mesh: no usable geometry in '" + path + "'");

  TexturedMesh mesh;
  if (!texture_file.empty()) {
    mesh.texture = read_png((base / texture_file).string());
    if (mesh.texture.channels() == 1) {
      Image rgb(mesh.texture.height(), mesh.texture.width(), 3, 0.0);
      for (int y = 0; y < rgb.height(); ++y)
        for (int x = 0; x < rgb.width(); ++x)
          for (int c = 0; c < 3; ++c) rgb(y, x, c) = mesh.texture(y, x);
      mesh.texture = rgb;
    }
  } else {
    if (warnings) warnings->push_back("no texture referenced; using a 1x1 gray placeholder");
    mesh.texture = Image(1, 1, 3, 0.5);
  }

  // Unify (v, vt, vn) corner tuples into single-index vertices.
  std::map<detail::ObjIndex, int> remap;
  const bool have_normals = !normals.empty();
  for (const auto& tri : tri_corners) {
    std::array<int, 3> face;
    for (int k = 0; k < 3; ++k) {
      detail::ObjIndex c = tri[static_cast<size_t>(k)];
      c.v = resolve(c.v, positions.size(), "vertex");
      if (c.vt == 0)
        throw IoError("load_mesh: face corner without UV; textured meshes require texcoords");
      c.vt = resolve(c.vt, texcoords.size(), "texcoord");
      c.vn = c.vn == 0 ? -1 : resolve(c.vn, normals.size(), "normal");
      auto [it, inserted] = remap.try_emplace(c, static_cast<int>(mesh.vertices.size()));
      if (inserted) {
        mesh.vertices.push_back(positions[static_cast<size_t>(c.v)]);
        const Vec2 uv = texcoords[static_cast<size_t>(c.vt)];
        mesh.uvs.emplace_back(clamp01(uv.x()), clamp01(uv.y()));
        mesh.normals.push_back(c.vn >= 0 ? normals[static_cast<size_t>(c.vn)] : Vec3::Zero());
      }
      face[static_cast<size_t>(k)] = it->second;
    }
    mesh.faces.push_back(face);
  }

  if (!have_normals) {
    // Area-weighted accumulation of face normals.
    for (const auto& f : mesh.faces) {
      const Vec3 n = (mesh.vertices[static_cast<size_t>(f[1])] - mesh.vertices[static_cast<size_t>(f[0])])
                         .cross(mesh.vertices[static_cast<size_t>(f[2])] -
                                mesh.vertices[static_cast<size_t>(f[0])]);
      for (int k = 0; k < 3; ++k) mesh.normals[static_cast<size_t>(f[static_cast<size_t>(k)])] += n;
    }
  }
  for (Vec3& n : mesh.normals) {
    const double len = n.norm();
    n = len > 1e-12 ? Vec3(n / len) : Vec3(0.0, 0.0, 1.0);
  }
  validate_mesh(mesh);
  return mesh;
}

}  // namespace retex
