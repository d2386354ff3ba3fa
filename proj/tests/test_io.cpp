// License: Apache 2.0. See LICENSE file in root directory.
// Copyright(c) 2026 retex contributors. All Rights Reserved.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "retex/config.hpp"
#include "retex/fixtures.hpp"
#include "retex/io_assets.hpp"
#include "retex/io_image.hpp"
#include "retex/metrics.hpp"
#include "retex/rng.hpp"

using namespace retex;

namespace {

std::filesystem::path test_dir() {
  static const std::filesystem::path dir = [] {
    auto d = std::filesystem::temp_directory_path() / "retex_io_tests";
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
  }();
  return dir;
}

std::string path_in(const std::string& name) { return (test_dir() / name).string(); }

std::vector<char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

GaussianCloud random_cloud(uint64_t seed, int count) {
  Rng rng(seed);
  GaussianCloud cloud;
  for (int i = 0; i < count; ++i) {
    Gaussian g;
    g.mu = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    g.scale = Vec3(rng.uniform(0.05, 0.5), rng.uniform(0.05, 0.5), rng.uniform(0.05, 0.5));
    Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    g.rotation = q / q.norm();
    g.color = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    g.opacity = rng.uniform(0.02, 0.98);
    cloud.gaussians.push_back(g);
  }
  return cloud;
}

Image random_image(uint64_t seed, int h, int w, int c) {
  Rng rng(seed);
  Image img(h, w, c, 0.0);
  for (double& v : img.data()) v = rng.uniform();
  return img;
}

/// Hand-written single-record PLY in the standard field order, for byte-level
/// failure injection.
void write_raw_ply(const std::string& path, const std::vector<std::string>& fields,
                   const std::vector<float>& record) {
  std::ofstream out(path, std::ios::binary);
  out << "ply\nformat binary_little_endian 1.0\nelement vertex 1\n";
  for (const auto& f : fields) out << "property float " << f << "\n";
  out << "end_header\n";
  out.write(reinterpret_cast<const char*>(record.data()),
            static_cast<std::streamsize>(record.size() * sizeof(float)));
}

const std::vector<std::string> kStandardFields = {
    "x",      "y",      "z",      "scale_0", "scale_1", "scale_2", "rot_0",
    "rot_1",  "rot_2",  "rot_3",  "f_dc_0",  "f_dc_1",  "f_dc_2",  "opacity"};

}  // namespace

TEST_CASE("gaussian cloud survives the splat interchange format") {
  const GaussianCloud cloud = random_cloud(3, 25);
  const std::string path = path_in("cloud.ply");
  save_gaussians(path, cloud);
  const GaussianCloud back = load_gaussians(path);
  REQUIRE(back.size() == cloud.size());
  for (size_t i = 0; i < cloud.size(); ++i) {
    const Gaussian& a = cloud.gaussians[i];
    const Gaussian& b = back.gaussians[i];
    CHECK((a.mu - b.mu).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((a.scale - b.scale).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((a.rotation - b.rotation).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((a.color - b.color).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(std::abs(a.opacity - b.opacity) < 1e-6);
  }
}

TEST_CASE("neutral splat fields decode to the conventional values") {
  // zero logit is opacity one half; zero DC coefficients are mid gray
  std::vector<float> rec(14, 0.0f);
  rec[6] = 1.0f;  // identity quaternion
  const std::string path = path_in("neutral.ply");
  write_raw_ply(path, kStandardFields, rec);
  const GaussianCloud cloud = load_gaussians(path);
  REQUIRE(cloud.size() == 1);
  CHECK(cloud.gaussians[0].opacity == 0.5);
  CHECK(cloud.gaussians[0].color == Vec3(0.5, 0.5, 0.5));
  CHECK(cloud.gaussians[0].scale == Vec3(1.0, 1.0, 1.0));
}

TEST_CASE("splat loader reports failures with byte offsets") {
  SECTION("missing magic") {
    const std::string path = path_in("junk.ply");
    std::ofstream(path) << "not a ply\nat all\n";
    try {
      load_gaussians(path);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(e.byte_offset() == 0);
      CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
    }
  }

  SECTION("truncated vertex data") {
    const std::string full = path_in("full.ply");
    save_gaussians(full, random_cloud(4, 3));
    const auto bytes = read_bytes(full);
    const std::string cut = path_in("cut.ply");
    std::ofstream(cut, std::ios::binary)
        .write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 30));
    try {
      load_gaussians(cut);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(e.byte_offset() > 0);
      CHECK(std::string(e.what()).find("truncated") != std::string::npos);
    }
  }

  SECTION("non-finite coordinate names the property") {
    std::vector<float> rec(14, 0.0f);
    rec[0] = std::numeric_limits<float>::quiet_NaN();
    rec[6] = 1.0f;
    const std::string path = path_in("nan.ply");
    write_raw_ply(path, kStandardFields, rec);
    try {
      load_gaussians(path);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("'x'") != std::string::npos);
      CHECK(e.byte_offset() >= 0);
    }
  }

  SECTION("missing property") {
    std::vector<std::string> fields = kStandardFields;
    fields.pop_back();
    std::vector<float> rec(13, 0.0f);
    const std::string path = path_in("noprop.ply");
    write_raw_ply(path, fields, rec);
    CHECK_THROWS_AS(load_gaussians(path), IoError);
  }
}

TEST_CASE("higher harmonic bands are skipped with a warning") {
  std::vector<std::string> fields = kStandardFields;
  fields.push_back("f_rest_0");
  std::vector<float> rec(15, 0.0f);
  rec[6] = 1.0f;
  rec[14] = 9.0f;
  const std::string path = path_in("rest.ply");
  write_raw_ply(path, fields, rec);
  std::vector<std::string> warnings;
  const GaussianCloud cloud = load_gaussians(path, &warnings);
  REQUIRE(cloud.size() == 1);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("f_rest_") != std::string::npos);
}

TEST_CASE("mesh survives the obj round trip") {
  const TexturedMesh mesh = make_cube_mesh(1.0, make_checker_texture(16, 4));
  const std::string path = path_in("cube.obj");
  save_mesh(path, mesh);
  const TexturedMesh back = load_mesh(path);

  REQUIRE(back.faces.size() == 12);
  REQUIRE(back.vertices.size() == mesh.vertices.size());
  // same unified indexing on both sides, so geometry compares per slot
  for (size_t f = 0; f < mesh.faces.size(); ++f)
    for (int k = 0; k < 3; ++k) {
      const Vec3 va = mesh.vertices[static_cast<size_t>(mesh.faces[f][static_cast<size_t>(k)])];
      const Vec3 vb = back.vertices[static_cast<size_t>(back.faces[f][static_cast<size_t>(k)])];
      CHECK((va - vb).cwiseAbs().maxCoeff() < 1e-6);
      const Vec2 ta = mesh.uvs[static_cast<size_t>(mesh.faces[f][static_cast<size_t>(k)])];
      const Vec2 tb = back.uvs[static_cast<size_t>(back.faces[f][static_cast<size_t>(k)])];
      CHECK((ta - tb).cwiseAbs().maxCoeff() < 1e-6);
      const Vec3 na = mesh.normals[static_cast<size_t>(mesh.faces[f][static_cast<size_t>(k)])];
      const Vec3 nb = back.normals[static_cast<size_t>(back.faces[f][static_cast<size_t>(k)])];
      CHECK((na - nb).cwiseAbs().maxCoeff() < 1e-6);
    }
  // texture passes through 8-bit quantization once
  REQUIRE(back.texture.same_shape(mesh.texture));
  CHECK(max_abs_diff(back.texture, mesh.texture) <= 0.5 / 255.0 + 1e-12);
}

TEST_CASE("mesh loader rejects malformed inputs") {
  SECTION("empty file") {
    const std::string path = path_in("empty.obj");
    std::ofstream(path).flush();
    CHECK_THROWS_AS(load_mesh(path), IoError);
  }

  SECTION("missing file") { CHECK_THROWS_AS(load_mesh(path_in("missing.obj")), IoError); }

  SECTION("corner without texcoord") {
    const std::string path = path_in("nouv.obj");
    std::ofstream(path) << "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n";
    try {
      load_mesh(path);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("texcoord") != std::string::npos);
    }
  }

  SECTION("face index out of range") {
    const std::string path = path_in("badidx.obj");
    std::ofstream(path) << "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nf 1/1 2/1 9/1\n";
    CHECK_THROWS_AS(load_mesh(path), IoError);
  }

  SECTION("missing material file") {
    const std::string path = path_in("nomtl.obj");
    std::ofstream(path) << "mtllib nowhere.mtl\nv 0 0 0\nvt 0 0\nf 1/1 1/1 1/1\n";
    CHECK_THROWS_AS(load_mesh(path), IoError);
  }

  SECTION("no texture reference falls back to gray with a warning") {
    const std::string path = path_in("untextured.obj");
    std::ofstream(path) << "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvt 1 0\nvt 0 1\nf 1/1 2/2 3/3\n";
    std::vector<std::string> warnings;
    const TexturedMesh mesh = load_mesh(path, &warnings);
    REQUIRE(warnings.size() == 1);
    CHECK(mesh.texture.height() == 1);
    CHECK(mesh.texture(0, 0, 0) == 0.5);
  }

  SECTION("quads are fan triangulated") {
    const std::string path = path_in("quad.obj");
    std::ofstream(path) << "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\n"
                        << "vt 0 0\nvt 1 0\nvt 1 1\nvt 0 1\nf 1/1 2/2 3/3 4/4\n";
    const TexturedMesh mesh = load_mesh(path);
    CHECK(mesh.faces.size() == 2);
  }
}

TEST_CASE("png writes are deterministic and quantize once") {
  const Image img = random_image(9, 20, 30, 3);
  const std::string a = path_in("a.png");
  const std::string b = path_in("b.png");
  write_png(a, img);
  write_png(b, img);
  CHECK(read_bytes(a) == read_bytes(b));

  const Image back = read_png(a);
  REQUIRE(back.same_shape(img));
  CHECK(max_abs_diff(back, img) <= 0.5 / 255.0 + 1e-12);

  // re-encoding a decoded image is lossless
  const std::string c = path_in("c.png");
  write_png(c, back);
  CHECK(max_abs_diff(read_png(c), back) == 0.0);

  const Image gray = random_image(10, 8, 8, 1);
  const std::string g = path_in("g.png");
  write_png(g, gray);
  const Image gback = read_png(g);
  REQUIRE(gback.channels() == 1);
  CHECK(max_abs_diff(gback, gray) <= 0.5 / 255.0 + 1e-12);

  CHECK_THROWS_AS(write_png(path_in("bad.png"), Image(4, 4, 2, 0.0)), std::invalid_argument);
  CHECK_THROWS_AS(read_png(path_in("missing.png")), IoError);
  std::ofstream(path_in("notpng.png")) << "hello";
  CHECK_THROWS_AS(read_png(path_in("notpng.png")), IoError);
}

TEST_CASE("mask png uses full-scale black and white") {
  MaskImage mask(3, 5, 1, 0);
  mask(1, 2) = 1;
  mask(2, 4) = 1;
  const std::string path = path_in("mask.png");
  write_mask_png(path, mask);
  const Image back = read_png(path);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 5; ++x) CHECK(back(y, x) == (mask(y, x) ? 1.0 : 0.0));
}

TEST_CASE("pfm stores float32 exactly including sentinels") {
  Image depth = random_image(11, 7, 9, 1);
  depth(0, 0) = std::numeric_limits<double>::infinity();
  depth(3, 4) = 1234.5;
  const std::string path = path_in("depth.pfm");
  write_pfm(path, depth);
  const Image back = read_pfm(path);
  REQUIRE(back.same_shape(depth));
  for (size_t i = 0; i < depth.data().size(); ++i)
    CHECK(back.data()[i] == static_cast<double>(static_cast<float>(depth.data()[i])));

  const Image rgb = random_image(12, 5, 6, 3);
  write_pfm(path_in("rgb.pfm"), rgb);
  const Image rgb_back = read_pfm(path_in("rgb.pfm"));
  REQUIRE(rgb_back.channels() == 3);
  for (size_t i = 0; i < rgb.data().size(); ++i)
    CHECK(rgb_back.data()[i] == static_cast<double>(static_cast<float>(rgb.data()[i])));

  std::ofstream(path_in("bad.pfm")) << "XX\n1 1\n-1.0\n";
  CHECK_THROWS_AS(read_pfm(path_in("bad.pfm")), IoError);
}

TEST_CASE("pfm stacks concatenate frames in order") {
  std::vector<Image> frames;
  for (int k = 0; k < 3; ++k) frames.push_back(random_image(20 + static_cast<uint64_t>(k), 4, 5, 1));
  const std::string path = path_in("stack.pfm");
  write_pfm_stack(path, frames);
  const std::vector<Image> back = read_pfm_stack(path);
  REQUIRE(back.size() == 3);
  for (size_t k = 0; k < 3; ++k)
    for (size_t i = 0; i < frames[k].data().size(); ++i)
      CHECK(back[k].data()[i] == static_cast<double>(static_cast<float>(frames[k].data()[i])));

  write_pfm_stack(path_in("empty.pfm"), {});
  CHECK_THROWS_AS(read_pfm_stack(path_in("empty.pfm")), IoError);
}

TEST_CASE("psnr follows its closed forms") {
  const Image a = random_image(13, 6, 6, 3);
  CHECK(psnr(a, a) == std::numeric_limits<double>::infinity());

  Image b = a;
  for (double& v : b.data()) v += 0.1;
  CHECK(psnr(a, b) == Catch::Approx(20.0).margin(1e-9));

  const Image c = random_image(14, 6, 6, 3);
  double acc = 0.0;
  for (size_t i = 0; i < a.data().size(); ++i) {
    const double d = a.data()[i] - c.data()[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.data().size());
  CHECK(mean_squared_error(a, c) == Catch::Approx(mse).margin(1e-15));
  CHECK(psnr(a, c) == Catch::Approx(10.0 * std::log10(1.0 / mse)).margin(1e-9));

  CHECK_THROWS_AS(psnr(a, Image(5, 6, 3, 0.0)), std::invalid_argument);

  MaskImage none(6, 6, 1, 0);
  CHECK(masked_psnr(a, c, none) == std::numeric_limits<double>::infinity());
  MaskImage some(6, 6, 1, 0);
  some(2, 3) = 1;
  double macc = 0.0;
  for (int ch = 0; ch < 3; ++ch) {
    const double d = a(2, 3, ch) - c(2, 3, ch);
    macc += d * d;
  }
  CHECK(masked_psnr(a, c, some) == Catch::Approx(10.0 * std::log10(3.0 / macc)).margin(1e-9));
}

TEST_CASE("run config validates and round trips") {
  RunConfig cfg;
  cfg.seed = 99;
  cfg.interval = 60.0;
  cfg.guidance = 2.5;
  cfg.mesh = "meshes/thing.obj";
  cfg.reference = "ref.png";
  const RunConfig back = config_from_json(config_to_json(cfg));
  CHECK(back.seed == 99);
  CHECK(back.interval == 60.0);
  CHECK(back.guidance == 2.5);
  CHECK(back.mesh == "meshes/thing.obj");
  CHECK(back.reference == "ref.png");
  CHECK(back.output_dir == "run_out");

  SECTION("unknown keys are rejected") {
    nlohmann::json j = config_to_json(cfg);
    j["typo_key"] = 1;
    try {
      config_from_json(j);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("typo_key") != std::string::npos);
    }
  }

  SECTION("field validation") {
    auto expect_reject = [&](auto mutate) {
      RunConfig c = cfg;
      mutate(c);
      CHECK_THROWS_AS(config_from_json(config_to_json(c)), IoError);
    };
    expect_reject([](RunConfig& c) { c.interval = 0.0; });
    expect_reject([](RunConfig& c) { c.interval = 181.0; });
    expect_reject([](RunConfig& c) { c.elevation = 90.0; });
    expect_reject([](RunConfig& c) { c.render_size = 100; });
    expect_reject([](RunConfig& c) { c.latent_size = 4; });
    expect_reject([](RunConfig& c) { c.optimizer_lr = 1.5; });
    expect_reject([](RunConfig& c) { c.guidance = 0.0; });
    expect_reject([](RunConfig& c) { c.mesh.clear(); });
  }

  SECTION("file loading reports parse failures") {
    const std::string path = path_in("cfg.json");
    std::ofstream(path) << "{ not json";
    try {
      load_config(path);
      FAIL("expected IoError");
    } catch (const IoError& e) {
      CHECK(std::string(e.what()).find("parse error") != std::string::npos);
    }
    CHECK_THROWS_AS(load_config(path_in("missing.json")), IoError);
  }
}

TEST_CASE("raster helpers pool and clamp") {
  Image img(4, 4, 1, 0.0);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) img(y, x) = y * 4 + x;
  const Image pooled = average_pool(img, 2);
  REQUIRE(pooled.height() == 2);
  CHECK(pooled(0, 0) == Catch::Approx((0 + 1 + 4 + 5) / 4.0));
  CHECK(pooled(1, 1) == Catch::Approx((10 + 11 + 14 + 15) / 4.0));
  CHECK_THROWS_AS(average_pool(img, 3), std::invalid_argument);

  CHECK(clamp01(-0.5) == 0.0);
  CHECK(clamp01(0.25) == 0.25);
  CHECK(clamp01(1.5) == 1.0);
}
