// License: Apache 2.0. See LICENSE file in root directory.
// Copyright(c) 2026 retex contributors. All Rights Reserved.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "retex/fixtures.hpp"
#include "retex/io_run.hpp"
#include "retex/pipeline.hpp"
#include "retex/rng.hpp"

using namespace retex;

namespace {

std::vector<double> azimuths(const ViewSchedule& s) {
  std::vector<double> out;
  for (const ViewSpec& v : s.views) out.push_back(v.azimuth);
  return out;
}

PipelineConfig small_config() {
  PipelineConfig cfg;
  cfg.seed = 5;
  cfg.interval = 120.0;
  cfg.render_size = 64;
  cfg.latent_size = 32;
  cfg.texture_size = 64;
  cfg.optimizer_steps = 60;
  return cfg;
}

PipelineConfig tiny_config() {
  PipelineConfig cfg;
  cfg.seed = 11;
  cfg.interval = 180.0;
  cfg.render_size = 32;
  cfg.latent_size = 32;
  cfg.texture_size = 32;
  cfg.optimizer_steps = 40;
  return cfg;
}

PipelineAssets sphere_assets() {
  PipelineAssets assets;
  assets.mesh = make_sphere_mesh(1.0, 32, 64, make_checker_texture(64));
  return assets;
}

std::vector<char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("view schedule alternates sides and ends at the back junction") {
  const ViewSchedule s = build_schedule(40.0);
  CHECK(azimuths(s) ==
        std::vector<double>{0, 40, -40, 80, -80, 120, -120, 160, -160, 180});
  CHECK(s.views[0].neighbors.empty());
  CHECK(s.views[1].neighbors == std::vector<double>{0.0});
  CHECK(s.views[2].neighbors == std::vector<double>{0.0});
  CHECK(s.views[3].neighbors == std::vector<double>{40.0});
  CHECK(s.views[4].neighbors == std::vector<double>{-40.0});
  CHECK(s.views[7].neighbors == std::vector<double>{120.0});
  CHECK(s.views[8].neighbors == std::vector<double>{-120.0});
  CHECK(s.views.back().azimuth == 180.0);
  CHECK(s.views.back().neighbors == std::vector<double>{160.0, -160.0});
}

TEST_CASE("view schedule handles coarse intervals") {
  CHECK(azimuths(build_schedule(180.0)) == std::vector<double>{0, 180});
  CHECK(build_schedule(180.0).views.back().neighbors == std::vector<double>{0.0});

  const ViewSchedule s60 = build_schedule(60.0);
  CHECK(azimuths(s60) == std::vector<double>{0, 60, -60, 120, -120, 180});
  CHECK(s60.views.back().neighbors == std::vector<double>{120.0, -120.0});

  const ViewSchedule s50 = build_schedule(50.0);
  CHECK(azimuths(s50) == std::vector<double>{0, 50, -50, 100, -100, 150, -150, 180});
  CHECK(s50.views.back().neighbors == std::vector<double>{150.0, -150.0});
}

TEST_CASE("view schedule invariants hold for arbitrary intervals") {
  for (double interval : {15.0, 23.7, 40.0, 55.0, 90.0, 179.0, 180.0}) {
    const ViewSchedule s = build_schedule(interval, 10.0);
    CHECK(s.elevation == 10.0);
    REQUIRE(s.views.size() >= 2);
    CHECK(s.views.front().azimuth == 0.0);
    CHECK(s.views.front().neighbors.empty());
    CHECK(s.views.back().azimuth == 180.0);

    std::set<double> seen;
    for (const ViewSpec& v : s.views) {
      CHECK(v.azimuth > -180.0);
      CHECK(v.azimuth <= 180.0);
      CHECK(!seen.count(v.azimuth));
      // every support view was refined earlier in the order
      for (double nb : v.neighbors) CHECK(seen.count(nb));
      seen.insert(v.azimuth);
    }
    // each chained view sits one interval beyond its support; the junction
    // closes the ring within one interval of both chain heads
    for (size_t i = 1; i + 1 < s.views.size(); ++i) {
      REQUIRE(s.views[i].neighbors.size() == 1);
      CHECK(std::abs(std::abs(s.views[i].azimuth) - std::abs(s.views[i].neighbors[0])) ==
            Catch::Approx(interval).margin(1e-9));
    }
    for (double nb : s.views.back().neighbors)
      CHECK(180.0 - std::abs(nb) <= interval + 1e-9);
  }
  CHECK_THROWS_AS(build_schedule(0.0), std::invalid_argument);
  CHECK_THROWS_AS(build_schedule(-5.0), std::invalid_argument);
  CHECK_THROWS_AS(build_schedule(181.0), std::invalid_argument);
}

TEST_CASE("reference view passes the reference image through untouched") {
  PipelineConfig cfg = small_config();
  PipelineAssets assets = sphere_assets();
  Rng rng(17);
  Image ref(cfg.latent_size, cfg.latent_size, 3, 0.0);
  for (double& v : ref.data()) v = rng.uniform();
  assets.reference = ref;

  ProgressiveRefiner refiner(cfg, assets);
  CHECK(max_abs_diff(refiner.reference_image(), ref) == 0.0);
  const ViewArtifacts art = refiner.refine_view(refiner.schedule().views[0]);
  CHECK(max_abs_diff(art.fine, ref) == 0.0);
  CHECK(art.occlusion.empty());
  CHECK(art.vis.values.empty());
  CHECK(art.coarse.height() == cfg.render_size);
  CHECK(art.coarse_latent.height() == cfg.latent_size);
}

TEST_CASE("render-sized reference images are pooled to latent size") {
  PipelineConfig cfg = small_config();
  PipelineAssets assets = sphere_assets();
  Rng rng(18);
  Image ref(cfg.render_size, cfg.render_size, 3, 0.0);
  for (double& v : ref.data()) v = rng.uniform();
  assets.reference = ref;

  ProgressiveRefiner refiner(cfg, assets);
  const Image pooled = average_pool(ref, cfg.render_size / cfg.latent_size);
  CHECK(max_abs_diff(refiner.reference_image(), pooled) == 0.0);

  assets.reference = Image(24, 24, 3, 0.0);
  CHECK_THROWS_AS(ProgressiveRefiner(cfg, assets), std::invalid_argument);
}

TEST_CASE("revisiting an already-refined azimuth reproduces its coarse image") {
  // the repeated view improves nothing, so every texel is preserved and the
  // masked repaint collapses to the identity on the inverted trajectory
  PipelineConfig cfg = small_config();
  ProgressiveRefiner refiner(cfg, sphere_assets());
  refiner.refine_view(refiner.schedule().views[0]);

  ViewSpec repeat;
  repeat.azimuth = 0.0;
  repeat.neighbors = {0.0};
  const ViewArtifacts art = refiner.refine_view(repeat);

  REQUIRE(!art.vis.values.empty());
  double vmin = 1.0;
  for (double v : art.vis.values.data()) vmin = std::min(vmin, v);
  CHECK(vmin == 1.0);
  long flagged = 0;
  for (uint8_t m : art.occlusion.data()) flagged += m;
  CHECK(flagged == 0);
  CHECK(max_abs_diff(art.fine, art.coarse_latent) == 0.0);
}

TEST_CASE("unrefined support views are rejected with the view tag") {
  ProgressiveRefiner refiner(small_config(), sphere_assets());
  refiner.refine_view(refiner.schedule().views[0]);
  ViewSpec bad;
  bad.azimuth = 40.0;
  bad.neighbors = {7.0};
  try {
    refiner.refine_view(bad);
    FAIL("expected invalid_argument");
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).rfind("view 40: ", 0) == 0);
  }
}

TEST_CASE("full run lowers the summed masked error") {
  const PipelineConfig cfg = small_config();
  const RunResult result = run_pipeline(cfg, sphere_assets());
  REQUIRE(result.views.size() == 4);
  REQUIRE(result.view_psnr.size() == 4);
  CHECK(result.total_masked_mse_after < result.total_masked_mse_before);
  for (double p : result.view_psnr) CHECK(p > 10.0);
  for (const ViewArtifacts& art : result.views) {
    for (double v : art.fine.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    if (!art.vis.values.empty())
      for (double v : art.vis.values.data()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
  }
  // later views look at geometry the reference cannot see, so some texels
  // must actually be repainted
  bool any_zero_vis = false;
  for (const ViewArtifacts& art : result.views)
    for (double v : art.vis.values.data()) any_zero_vis |= v == 0.0;
  CHECK(any_zero_vis);
}

TEST_CASE("per-step reference capture and incremental texture updates run") {
  PipelineConfig cfg = tiny_config();
  cfg.per_step_reference = true;
  cfg.incremental_texture = true;
  const RunResult result = run_pipeline(cfg, sphere_assets());
  REQUIRE(result.views.size() == 2);
  CHECK(result.total_masked_mse_after < result.total_masked_mse_before);
}

TEST_CASE("identical configs replay bitwise, different seeds do not") {
  const PipelineConfig cfg = tiny_config();
  const RunResult a = run_pipeline(cfg, sphere_assets());
  const RunResult b = run_pipeline(cfg, sphere_assets());
  CHECK(max_abs_diff(a.refined.texture, b.refined.texture) == 0.0);
  REQUIRE(a.views.size() == b.views.size());
  for (size_t i = 0; i < a.views.size(); ++i)
    CHECK(max_abs_diff(a.views[i].fine, b.views[i].fine) == 0.0);
  CHECK(a.view_psnr == b.view_psnr);

  PipelineConfig other = cfg;
  other.seed = cfg.seed + 1;
  const RunResult c = run_pipeline(other, sphere_assets());
  CHECK(max_abs_diff(a.refined.texture, c.refined.texture) > 0.0);

  SECTION("run directories are byte identical") {
    RunConfig rc;
    static_cast<PipelineConfig&>(rc) = cfg;
    rc.mesh = "sphere.obj";
    const auto base = std::filesystem::temp_directory_path() / "retex_pipeline_tests";
    std::filesystem::remove_all(base);
    save_run((base / "one").string(), rc, a);
    save_run((base / "two").string(), rc, b);
    CHECK(read_bytes(base / "one" / "run.json") == read_bytes(base / "two" / "run.json"));
    CHECK(read_bytes(base / "one" / "mesh" / "texture.png") ==
          read_bytes(base / "two" / "mesh" / "texture.png"));

    const TexturedMesh reloaded = load_mesh((base / "one" / "mesh" / "refined.obj").string());
    CHECK(reloaded.faces.size() == a.refined.faces.size());

    nlohmann::json doc;
    std::ifstream in(base / "one" / "run.json");
    in >> doc;
    CHECK(doc.at("config").at("seed").get<uint64_t>() == cfg.seed);
    REQUIRE(doc.at("schedule").size() == 2);
    CHECK(doc.at("schedule")[1].at("azimuth").get<double>() == 180.0);
    REQUIRE(doc.at("views").size() == 2);
    CHECK(doc.at("metrics").contains("masked_mse_before"));
    CHECK(doc.at("metrics").contains("masked_mse_after"));
    for (const char* name : {"coarse.png", "depth.pfm", "fine.png"})
      CHECK(std::filesystem::exists(base / "one" / "views" / "0" / name));
    for (const char* name : {"occlusion.png", "visibility.png"})
      CHECK(std::filesystem::exists(base / "one" / "views" / "180" / name));
  }
}
