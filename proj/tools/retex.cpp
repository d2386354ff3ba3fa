// License: Apache 2.0. See LICENSE file in root directory.
// Copyright(c) 2026 retex contributors. All Rights Reserved.
//
// Command-line surface. Exit codes: 0 success, 1 usage error, 2 data error
// (malformed input, bad arguments), 3 numeric failure.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "retex/retex.hpp"

namespace fs = std::filesystem;
using namespace retex;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Scene {
  std::optional<TexturedMesh> mesh;
  std::optional<GaussianCloud> cloud;

  double bounding_radius() const {
    double r = 0.0;
    if (mesh)
      for (const Vec3& v : mesh->vertices) r = std::max(r, v.norm());
    if (cloud)
      for (const Gaussian& g : cloud->gaussians) r = std::max(r, g.mu.norm());
    return r;
  }
};

Scene load_scene(const std::string& mesh_path, const std::string& cloud_path) {
  if (mesh_path.empty() == cloud_path.empty())
    throw UsageError("exactly one of --mesh or --cloud is required");
  Scene s;
  std::vector<std::string> warnings;
  if (!mesh_path.empty()) s.mesh = load_mesh(mesh_path, &warnings);
  if (!cloud_path.empty()) s.cloud = load_gaussians(cloud_path, &warnings);
  for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
  return s;
}

struct CameraOpts {
  double azimuth = 0.0;
  double elevation = 0.0;
  double fov = 55.0;
  double radius = 0.0;  // 0: derived from scene extent
  int size = 256;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--azimuth", azimuth, "camera azimuth in degrees");
    cmd->add_option("--elevation", elevation, "camera elevation in degrees");
    cmd->add_option("--fov", fov, "vertical field of view in degrees");
    cmd->add_option("--radius", radius, "orbit radius (default 2.5x scene extent)");
    cmd->add_option("--size", size, "output image size in pixels");
  }

  CameraView camera(const Scene& scene, double azim) const {
    double r = radius;
    if (r <= 0.0) {
      const double extent = scene.bounding_radius();
      if (!(extent > 0.0)) throw UsageError("scene has no spatial extent; pass --radius");
      r = 2.5 * extent;
    }
    return make_orbit_camera(azim, elevation, r, fov, size, size);
  }

  CameraView camera(const Scene& scene) const { return camera(scene, azimuth); }
};

GBuffer render_scene(const Scene& scene, const CameraView& cam, double background) {
  if (scene.cloud) return render(*scene.cloud, cam, Vec3::Constant(background));
  GBuffer g = rasterize(*scene.mesh, cam);
  if (background != 0.0)
    for (int y = 0; y < g.height(); ++y)
      for (int x = 0; x < g.width(); ++x)
        if (g.alpha(y, x) == 0.0)
          for (int c = 0; c < 3; ++c) g.color(y, x, c) = background;
  return g;
}

Image read_gray(const std::string& path) {
  Image img = read_png(path);
  if (img.channels() == 1) return img;
  Image out(img.height(), img.width(), 1, 0.0);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      out(y, x) = (img(y, x, 0) + img(y, x, 1) + img(y, x, 2)) / 3.0;
  return out;
}

MaskImage read_mask(const std::string& path) {
  const Image img = read_gray(path);
  MaskImage m(img.height(), img.width(), 1, 0);
  for (size_t i = 0; i < m.data().size(); ++i) m.data()[i] = img.data()[i] > 0.5 ? 1 : 0;
  return m;
}

ToyDenoiserConfig denoiser_config_for(const Image& img, uint64_t seed) {
  if (img.height() != img.width() || img.height() % 8 != 0 || img.channels() != 3)
    throw std::invalid_argument("latent images must be square RGB with size divisible by 8");
  ToyDenoiserConfig cfg;
  cfg.height = img.height();
  cfg.width = img.width();
  cfg.patch = img.height() / 8;
  cfg.seed = seed;
  return cfg;
}

Conditioning build_conditioning(const std::string& depth_path, const std::string& prompt_path,
                                double guidance, const Image& latent) {
  Conditioning cond;
  cond.guidance = guidance;
  if (!depth_path.empty()) {
    Image d = read_pfm(depth_path);
    if (d.channels() != 1 || d.height() != latent.height() || d.width() != latent.width())
      throw std::invalid_argument("depth map must be single-channel at latent resolution");
    cond.depth = std::move(d);
  }
  if (!prompt_path.empty()) cond.prompt = image_prompt_embedding(read_png(prompt_path));
  return cond;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"retex: progressive multi-view texture refinement toolkit"};
  app.require_subcommand(1);
  app.fallthrough();

  uint64_t seed = 1;
  int threads = 1;
  std::string global_config;
  app.add_option("--seed", seed, "seed for procedural generation and the toy denoiser");
  app.add_option("--threads", threads, "data-parallel worker count (results do not depend on it)");
  app.add_option("--config", global_config, "JSON config file (pipeline)");

  // render
  auto* c_render = app.add_subcommand("render", "render a splat cloud or textured mesh");
  std::string r_mesh, r_cloud, r_out, r_depth_out, r_alpha_out;
  double r_background = 0.0;
  CameraOpts r_cam;
  c_render->add_option("--mesh", r_mesh, "OBJ mesh path");
  c_render->add_option("--cloud", r_cloud, "PLY splat cloud path");
  r_cam.add_to(c_render);
  c_render->add_option("--background", r_background, "background gray level in [0,1]");
  c_render->add_option("--out", r_out, "output PNG")->required();
  c_render->add_option("--depth-out", r_depth_out, "optional depth PFM");
  c_render->add_option("--alpha-out", r_alpha_out, "optional coverage PNG");
  c_render->callback([&] {
    set_max_threads(threads);
    const Scene scene = load_scene(r_mesh, r_cloud);
    const GBuffer g = render_scene(scene, r_cam.camera(scene), r_background);
    write_png(r_out, g.color);
    if (!r_depth_out.empty()) write_pfm(r_depth_out, g.depth);
    if (!r_alpha_out.empty()) write_png(r_alpha_out, g.alpha);
  });

  // occlusion
  auto* c_occ = app.add_subcommand("occlusion", "novel-view pixels invisible from a source view");
  std::string o_mesh, o_cloud, o_out;
  double o_ref_azimuth = 0.0, o_tau_scale = 0.01;
  CameraOpts o_cam;
  c_occ->add_option("--mesh", o_mesh, "OBJ mesh path");
  c_occ->add_option("--cloud", o_cloud, "PLY splat cloud path");
  o_cam.add_to(c_occ);
  c_occ->add_option("--ref-azimuth", o_ref_azimuth, "azimuth of the already-seen view");
  c_occ->add_option("--tau-scale", o_tau_scale, "depth tolerance as a fraction of scene extent");
  c_occ->add_option("--out", o_out, "output mask PNG")->required();
  c_occ->callback([&] {
    set_max_threads(threads);
    const Scene scene = load_scene(o_mesh, o_cloud);
    const double tau = o_tau_scale * scene.bounding_radius();
    const CameraView ref_cam = o_cam.camera(scene, o_ref_azimuth);
    const CameraView novel_cam = o_cam.camera(scene);
    const GBuffer ref_g = render_scene(scene, ref_cam, 0.0);
    const GBuffer novel_g = render_scene(scene, novel_cam, 0.0);
    const OcclusionMask occ = occlusion_mask({ref_cam, ref_g.depth}, {novel_cam, novel_g.depth}, tau);
    write_mask_png(o_out, occ.mask);
  });

  // visibility
  auto* c_vis = app.add_subcommand("visibility", "per-texel refinement need vs previous views");
  std::string v_mesh, v_cloud, v_out, v_occ_out;
  std::vector<double> v_prev;
  double v_tau_scale = 0.01;
  int v_latent = 64;
  CameraOpts v_cam;
  c_vis->add_option("--mesh", v_mesh, "OBJ mesh path");
  c_vis->add_option("--cloud", v_cloud, "PLY splat cloud path");
  v_cam.add_to(c_vis);
  c_vis->add_option("--prev", v_prev, "azimuths of previously refined views")->required();
  c_vis->add_option("--tau-scale", v_tau_scale, "depth tolerance as a fraction of scene extent");
  c_vis->add_option("--latent-size", v_latent, "pooled output resolution");
  c_vis->add_option("--out", v_out, "output PNG (linear-quantized V)")->required();
  c_vis->add_option("--occlusion-out", v_occ_out, "optional occlusion mask PNG");
  c_vis->callback([&] {
    set_max_threads(threads);
    const Scene scene = load_scene(v_mesh, v_cloud);
    const double tau = v_tau_scale * scene.bounding_radius();
    const CameraView novel_cam = v_cam.camera(scene);
    const GBuffer novel_g = render_scene(scene, novel_cam, 0.0);
    std::vector<RenderedView> prevs;
    OcclusionMask occ;
    for (size_t i = 0; i < v_prev.size(); ++i) {
      const CameraView pc = v_cam.camera(scene, v_prev[i]);
      prevs.push_back({pc, render_scene(scene, pc, 0.0)});
      OcclusionMask m =
          occlusion_mask({pc, prevs.back().gbuf.depth}, {novel_cam, novel_g.depth}, tau);
      occ = i == 0 ? std::move(m) : intersect(occ, m);
    }
    const VisibilityMap vis = visibility_map({novel_cam, novel_g}, prevs, occ, v_latent);
    write_png(v_out, vis.values);
    if (!v_occ_out.empty()) write_mask_png(v_occ_out, occ.mask);
  });

  // invert
  auto* c_inv = app.add_subcommand("invert", "deterministically invert an image to noise");
  std::string i_input, i_depth, i_prompt, i_out, i_traj;
  double i_guidance = 1.0;
  int i_steps = 30;
  c_inv->add_option("--input", i_input, "input PNG")->required();
  c_inv->add_option("--depth", i_depth, "depth PFM conditioning");
  c_inv->add_option("--prompt-from", i_prompt, "PNG whose embedding conditions the denoiser");
  c_inv->add_option("--guidance", i_guidance, "classifier-free guidance scale");
  c_inv->add_option("--steps", i_steps, "number of visited timesteps");
  c_inv->add_option("--out-latent", i_out, "final latent PFM")->required();
  c_inv->add_option("--dump-trajectory", i_traj, "all latents as a PFM stack (ascending t)");
  c_inv->callback([&] {
    set_max_threads(threads);
    const Image x0 = read_png(i_input);
    const ToyDenoiser dn(denoiser_config_for(x0, seed));
    const Conditioning cond = build_conditioning(i_depth, i_prompt, i_guidance, x0);
    const NoiseSchedule sched = make_schedule(1000, i_steps);
    const Trajectory traj = invert_trajectory(x0, dn, cond, sched, i_steps);
    write_pfm(i_out, traj.latents.back().data);
    if (!i_traj.empty()) {
      std::vector<Image> frames;
      for (const Latent& l : traj.latents) frames.push_back(l.data);
      write_pfm_stack(i_traj, frames);
    }
  });

  // repaint
  auto* c_rep = app.add_subcommand("repaint", "invert then selectively re-denoise an image");
  std::string p_input, p_vis, p_depth, p_prompt, p_reference, p_out;
  double p_guidance = 1.0;
  int p_steps = 30;
  c_rep->add_option("--input", p_input, "input PNG")->required();
  c_rep->add_option("--visibility", p_vis, "visibility PNG; repaint where V is low")->required();
  c_rep->add_option("--depth", p_depth, "depth PFM conditioning");
  c_rep->add_option("--prompt-from", p_prompt, "PNG whose embedding conditions the denoiser");
  c_rep->add_option("--reference", p_reference, "PNG whose attention K/V are injected");
  c_rep->add_option("--guidance", p_guidance, "classifier-free guidance scale");
  c_rep->add_option("--steps", p_steps, "number of visited timesteps");
  c_rep->add_option("--out", p_out, "output PNG")->required();
  c_rep->callback([&] {
    set_max_threads(threads);
    const Image x0 = read_png(p_input);
    const ToyDenoiser dn(denoiser_config_for(x0, seed));
    Conditioning cond = build_conditioning(p_depth, p_prompt, p_guidance, x0);
    const NoiseSchedule sched = make_schedule(1000, p_steps);
    const Image vis_img = read_gray(p_vis);
    if (vis_img.height() != x0.height() || vis_img.width() != x0.width())
      throw std::invalid_argument("visibility map must match the input resolution");
    const Trajectory traj = invert_trajectory(x0, dn, cond, sched, p_steps);
    if (!p_reference.empty()) {
      const Image ref = read_png(p_reference);
      int t_mid = sched.step_indices.front();
      for (int t : sched.step_indices)
        if (std::abs(t - sched.T / 2) < std::abs(t_mid - sched.T / 2)) t_mid = t;
      cond.reference_features = dn.capture_features(ref, t_mid, cond);
    }
    const Latent out =
        repaint_denoise(traj.latents.back(), traj, dn, cond, VisibilityMap{vis_img}, sched);
    Image fine = out.data;
    for (double& v : fine.data()) v = clamp01(v);
    write_png(p_out, fine);
  });

  // refine
  auto* c_ref = app.add_subcommand("refine", "fit the mesh texture to per-view targets");
  std::string f_mesh, f_out;
  std::vector<std::string> f_views;
  int f_steps = 200;
  double f_lr = 0.5;
  CameraOpts f_cam;
  c_ref->add_option("--mesh", f_mesh, "OBJ mesh path")->required();
  c_ref->add_option("--view", f_views, "azimuth:target.png[:mask.png], repeatable")->required();
  f_cam.add_to(c_ref);
  c_ref->add_option("--steps", f_steps, "gradient descent steps");
  c_ref->add_option("--lr", f_lr, "learning rate in (0, 1]");
  c_ref->add_option("--out", f_out, "output OBJ path")->required();
  c_ref->callback([&] {
    set_max_threads(threads);
    Scene scene = load_scene(f_mesh, "");
    std::vector<RefinementView> views;
    for (const std::string& spec : f_views) {
      const size_t first = spec.find(':');
      if (first == std::string::npos)
        throw UsageError("--view expects azimuth:target.png[:mask.png]");
      const size_t second = spec.find(':', first + 1);
      double azim = 0.0;
      try {
        azim = std::stod(spec.substr(0, first));
      } catch (const std::exception&) {
        throw UsageError("--view azimuth is not a number: " + spec);
      }
      const std::string target_path = second == std::string::npos
                                          ? spec.substr(first + 1)
                                          : spec.substr(first + 1, second - first - 1);
      Image target = read_png(target_path);
      if (target.channels() != 3) throw std::invalid_argument("refine targets must be RGB");
      CameraOpts cam_opts = f_cam;
      cam_opts.size = target.height();
      if (target.width() != target.height())
        throw std::invalid_argument("refine targets must be square");
      const CameraView cam = cam_opts.camera(scene, azim);
      MaskImage mask;
      if (second != std::string::npos) {
        mask = read_mask(spec.substr(second + 1));
      } else {
        const GBuffer g = rasterize(*scene.mesh, cam);
        mask = MaskImage(g.height(), g.width(), 1, 0);
        for (int y = 0; y < g.height(); ++y)
          for (int x = 0; x < g.width(); ++x) mask(y, x) = g.alpha(y, x) > 0.5 ? 1 : 0;
      }
      views.push_back({cam, std::move(target), std::move(mask)});
    }
    const TexturedMesh refined = refine_texture(*scene.mesh, views, f_steps, f_lr);
    save_mesh(f_out, refined);
    for (const RefinementView& v : views) {
      const GBuffer g = rasterize(refined, v.cam);
      std::printf("view %g: masked psnr %.3f dB\n", v.cam.azimuth,
                  masked_psnr(g.color, v.target, v.mask));
    }
  });

  // pipeline
  auto* c_pipe = app.add_subcommand("pipeline", "full progressive refinement run");
  std::string pl_config, pl_out;
  c_pipe->add_option("--config", pl_config, "JSON run config");
  c_pipe->add_option("--out", pl_out, "output directory (overrides the config)");
  c_pipe->callback([&] {
    set_max_threads(threads);
    const std::string cfg_path = pl_config.empty() ? global_config : pl_config;
    if (cfg_path.empty()) throw UsageError("pipeline requires --config");
    RunConfig cfg = load_config(cfg_path);
    const fs::path base = fs::path(cfg_path).parent_path();
    auto resolve = [&](const std::string& p) {
      return p.empty() || fs::path(p).is_absolute() ? p : (base / p).string();
    };
    if (cfg.mesh.empty()) throw IoError("config: mesh path is required");
    PipelineAssets assets;
    std::vector<std::string> warnings;
    assets.mesh = load_mesh(resolve(cfg.mesh), &warnings);
    if (!cfg.cloud.empty()) assets.cloud = load_gaussians(resolve(cfg.cloud), &warnings);
    if (!cfg.reference.empty()) assets.reference = read_png(resolve(cfg.reference));
    for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
    const std::string out_dir = pl_out.empty() ? resolve(cfg.output_dir) : pl_out;
    ProgressiveRefiner refiner(cfg, assets);
    std::vector<ViewArtifacts> views;
    try {
      for (const ViewSpec& view : refiner.schedule().views)
        views.push_back(refiner.refine_view(view));
    } catch (...) {
      // keep whatever was completed so a failing run can be inspected
      for (const ViewArtifacts& art : views) save_view_artifacts(out_dir, art);
      throw;
    }
    const RunResult result = refiner.finish(std::move(views));
    save_run(out_dir, cfg, result);
    for (size_t i = 0; i < result.views.size(); ++i)
      std::printf("view %g: masked psnr %.3f dB\n", result.views[i].azimuth, result.view_psnr[i]);
    std::printf("total masked mse: %.6g -> %.6g\n", result.total_masked_mse_before,
                result.total_masked_mse_after);
    std::printf("run written to %s\n", out_dir.c_str());
  });

  // metrics
  auto* c_met = app.add_subcommand("metrics", "psnr/mse between two images");
  std::string m_a, m_b, m_mask;
  c_met->add_option("--a", m_a, "first PNG")->required();
  c_met->add_option("--b", m_b, "second PNG")->required();
  c_met->add_option("--mask", m_mask, "optional mask PNG");
  c_met->callback([&] {
    const Image a = read_png(m_a);
    const Image b = read_png(m_b);
    if (m_mask.empty()) {
      std::printf("mse: %.12g\n", mean_squared_error(a, b));
      std::printf("psnr: %.6g\n", psnr(a, b));
    } else {
      const MaskImage mask = read_mask(m_mask);
      std::printf("masked psnr: %.6g\n", masked_psnr(a, b, mask));
    }
  });

  // make-fixture
  auto* c_fix = app.add_subcommand("make-fixture", "write a procedural scene and run config");
  std::string x_out, x_kind = "sphere";
  int x_texture_size = 256, x_count = 1500, x_reference_size = 64;
  double x_interval = 120.0;
  c_fix->add_option("--out", x_out, "output directory")->required();
  c_fix->add_option("--kind", x_kind, "sphere or cube")->check(CLI::IsMember({"sphere", "cube"}));
  c_fix->add_option("--texture-size", x_texture_size, "checker texture resolution");
  c_fix->add_option("--count", x_count, "gaussian count for the splat cloud");
  c_fix->add_option("--reference-size", x_reference_size, "reference render resolution");
  c_fix->add_option("--interval", x_interval, "azimuth interval written to run.json");
  c_fix->callback([&] {
    set_max_threads(threads);
    fs::create_directories(x_out);
    const Image texture = make_checker_texture(x_texture_size);
    TexturedMesh mesh = x_kind == "cube" ? make_cube_mesh(1.0, texture)
                                         : make_sphere_mesh(1.0, 48, 96, texture);
    save_mesh((fs::path(x_out) / "mesh.obj").string(), mesh, "texture.png");
    const GaussianCloud cloud = make_sphere_cloud(x_count, 1.0, &texture, seed);
    save_gaussians((fs::path(x_out) / "cloud.ply").string(), cloud);

    RunConfig cfg;
    cfg.seed = seed;
    cfg.interval = x_interval;
    cfg.latent_size = x_reference_size;
    cfg.mesh = "mesh.obj";
    cfg.cloud = x_kind == "sphere" ? "cloud.ply" : "";
    cfg.reference = "reference.png";
    cfg.output_dir = "run_out";
    validate_pipeline_config(cfg);

    double extent = 0.0;
    for (const Vec3& v : mesh.vertices) extent = std::max(extent, v.norm());
    const CameraView ref_cam =
        make_orbit_camera(0.0, cfg.elevation, 2.5 * extent, 55.0, cfg.latent_size, cfg.latent_size);
    const GBuffer ref_g = rasterize(mesh, ref_cam);
    write_png((fs::path(x_out) / "reference.png").string(), ref_g.color);

    const std::string cfg_text = config_to_json(cfg).dump(2) + "\n";
    detail::FilePtr f = detail::open_file((fs::path(x_out) / "run.json").string(), "wb");
    if (std::fwrite(cfg_text.data(), 1, cfg_text.size(), f.get()) != cfg_text.size())
      throw IoError("failed to write run.json");
    std::printf("fixture written to %s\n", x_out.c_str());
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
