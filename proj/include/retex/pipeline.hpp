// License: Apache 2.0. See LICENSE file in root directory.
// Copyright(c) 2026 retex contributors. All Rights Reserved.

#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "retex/config.hpp"
#include "retex/error.hpp"
#include "retex/diffusion.hpp"
#include "retex/metrics.hpp"
#include "retex/splat.hpp"
#include "retex/texture_opt.hpp"
#include "retex/toy_denoiser.hpp"
#include "retex/visibility.hpp"

namespace retex {

struct ViewSpec {
  double azimuth = 0.0;
  std::vector<double> neighbors;  // nearest previously refined view(s)
};

struct ViewSchedule {
  double interval = 40.0;
  double elevation = 0.0;
  std::vector<ViewSpec> views;
};

/// Bidirectional progressive order: 0, +i, -i, +2i, -2i, ... with the back
/// junction at 180 last. Each chain view leans on its predecessor in the same
/// direction; the junction lists both chain heads (deduplicated when the two
/// directions coincide). Azimuths live in (-180, 180].
inline ViewSchedule build_schedule(double interval, double elevation = 0.0) {
  if (!(interval > 0.0) || interval > 180.0)
    throw std::invalid_argument("build_schedule: interval must be in (0, 180]");
  ViewSchedule sched;
  sched.interval = interval;
  sched.elevation = elevation;
  sched.views.push_back({0.0, {}});
  double last_pos = 0.0, last_neg = 0.0;
  for (int k = 1; k * interval < 180.0 - 1e-9; ++k) {
    const double a = k * interval;
    sched.views.push_back({a, {last_pos}});
    sched.views.push_back({-a, {last_neg}});
    last_pos = a;
    last_neg = -a;
  }
  ViewSpec junction;
  junction.azimuth = 180.0;
  junction.neighbors.push_back(last_pos);
  if (last_neg != last_pos) junction.neighbors.push_back(last_neg);
  sched.views.push_back(junction);
  return sched;
}

struct PipelineAssets {
  TexturedMesh mesh;                   // texture carrier; also the coarse renderer by default
  std::optional<GaussianCloud> cloud;  // when set, coarse renders use splats instead
  std::optional<Image> reference;      // latent- or render-size RGB; default: coarse render at 0
};

struct ViewArtifacts {
  double azimuth = 0.0;
  GBuffer coarse;         // render-size coarse render
  Image coarse_latent;    // latent-size color, the inversion input
  MaskImage occlusion;    // render-size (empty on the reference view)
  VisibilityMap vis;      // latent-size (empty on the reference view)
  Image fine;             // latent-size refined target
  MaskImage fine_mask;    // latent-size foreground coverage
};

struct RunResult {
  ViewSchedule schedule;
  TexturedMesh refined;
  std::vector<ViewArtifacts> views;
  std::vector<double> view_psnr;  // masked, refined render vs fine target
  double total_masked_mse_before = 0.0;
  double total_masked_mse_after = 0.0;
};

namespace detail {

constexpr double kOrbitScale = 2.5;
constexpr double kFovDeg = 55.0;

/// Swaps in per-timestep reference K/V; used when the reference features are
/// re-captured along the reference's own inverted trajectory.
class PerStepInjectingDenoiser final : public Denoiser {
 public:
  PerStepInjectingDenoiser(const Denoiser& base, std::map<int, AttentionFeatures> by_t)
      : base_(base), by_t_(std::move(by_t)) {}

  Image predict_noise(const Image& x, int t, const Conditioning& cond) const override {
    auto it = by_t_.find(t);
    if (it == by_t_.end()) return base_.predict_noise(x, t, cond);
    Conditioning with = cond;
    with.reference_features = it->second;
    return base_.predict_noise(x, t, with);
  }

  AttentionFeatures capture_features(const Image& x, int t,
                                     const Conditioning& cond) const override {
    return base_.capture_features(x, t, cond);
  }

 private:
  const Denoiser& base_;
  std::map<int, AttentionFeatures> by_t_;
};

}  // namespace detail

/// Executes the schedule one view at a time: coarse render, occlusion and
/// visibility against the already-refined views, deterministic inversion of
/// the coarse image, masked repaint with reference-feature injection, and the
/// collection of refinement targets for the texture optimizer.
class ProgressiveRefiner {
 public:
  ProgressiveRefiner(const PipelineConfig& cfg, const PipelineAssets& assets)
      : cfg_(cfg), assets_(assets) {
    validate_pipeline_config(cfg_);
    validate_mesh(assets_.mesh);
    if (assets_.cloud) validate_cloud(*assets_.cloud);

    bounding_radius_ = 0.0;
    for (const Vec3& v : assets_.mesh.vertices)
      bounding_radius_ = std::max(bounding_radius_, v.norm());
    if (!(bounding_radius_ > 0.0))
      throw std::invalid_argument("pipeline: mesh has no spatial extent");
    tau_ = cfg_.tau_scale * bounding_radius_;

    working_mesh_ = assets_.mesh;
    if (working_mesh_.texture.width() != cfg_.texture_size ||
        working_mesh_.texture.height() != cfg_.texture_size)
      working_mesh_.texture = resample_texture(working_mesh_.texture, cfg_.texture_size);
    original_mesh_ = working_mesh_;

    ToyDenoiserConfig dn;
    dn.height = cfg_.latent_size;
    dn.width = cfg_.latent_size;
    dn.patch = std::max(1, cfg_.latent_size / 8);
    dn.seed = cfg_.seed;
    denoiser_ = std::make_unique<ToyDenoiser>(dn);
    sched_ = make_schedule(1000, cfg_.inversion_steps);

    reference_ = resolve_reference();
    prompt_ = image_prompt_embedding(reference_);
    setup_reference_features();
  }

  const ViewSchedule& schedule() {
    if (schedule_.views.empty()) schedule_ = build_schedule(cfg_.interval, cfg_.elevation);
    return schedule_;
  }

  CameraView render_camera(double azimuth) const {
    return make_orbit_camera(azimuth, cfg_.elevation, detail::kOrbitScale * bounding_radius_,
                             detail::kFovDeg, cfg_.render_size, cfg_.render_size);
  }

  CameraView latent_camera(double azimuth) const {
    return make_orbit_camera(azimuth, cfg_.elevation, detail::kOrbitScale * bounding_radius_,
                             detail::kFovDeg, cfg_.latent_size, cfg_.latent_size);
  }

  const Image& reference_image() const { return reference_; }
  const TexturedMesh& working_mesh() const { return working_mesh_; }
  double tau() const { return tau_; }

  /// Refines one view. Neighbors must have been refined already. The first
  /// refined view is the anchor: its target is the reference image, passed
  /// through unmodified. Errors carry the view azimuth.
  ViewArtifacts refine_view(const ViewSpec& view) {
    const std::string where = "view " + format_azimuth_tag(view.azimuth) + ": ";
    try {
      return refine_view_impl(view);
    } catch (const NumericError& e) {
      throw NumericError(where + e.what());
    } catch (const IoError& e) {
      throw IoError(where + e.what());
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(where + e.what());
    }
  }

  /// Batch texture refinement over all collected targets plus final metrics.
  RunResult finish(std::vector<ViewArtifacts> views) {
    RunResult result;
    result.schedule = schedule_;
    result.views = std::move(views);
    result.total_masked_mse_before = total_masked_mse(original_mesh_);
    if (!cfg_.incremental_texture)
      working_mesh_ = refine_texture(working_mesh_, texture_views_, cfg_.optimizer_steps,
                                     cfg_.optimizer_lr);
    result.total_masked_mse_after = total_masked_mse(working_mesh_);
    result.refined = working_mesh_;
    for (const RefinementView& tv : texture_views_) {
      const GBuffer g = rasterize(working_mesh_, tv.cam);
      result.view_psnr.push_back(masked_psnr(g.color, tv.target, tv.mask));
    }
    return result;
  }

  const std::vector<RefinementView>& texture_views() const { return texture_views_; }

 private:
  static std::string format_azimuth_tag(double azimuth) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g", azimuth);
    return buf;
  }

  ViewArtifacts refine_view_impl(const ViewSpec& view) {
    ViewArtifacts art;
    art.azimuth = view.azimuth;
    const CameraView cam_r = render_camera(view.azimuth);
    const CameraView cam_l = latent_camera(view.azimuth);
    art.coarse = render_coarse(cam_r);
    const GBuffer coarse_l = render_coarse(cam_l);
    art.coarse_latent = coarse_l.color;
    art.fine_mask = coverage_mask(coarse_l);

    if (refined_.empty()) {
      art.fine = reference_;
    } else {
      OcclusionMask occ;
      bool first = true;
      for (double nb : view.neighbors) {
        auto it = refined_.find(nb);
        if (it == refined_.end())
          throw std::invalid_argument("refine_view: neighbor at azimuth " + std::to_string(nb) +
                                      " not refined yet");
        DepthView ref_dv{it->second.cam, it->second.gbuf.depth};
        DepthView novel_dv{cam_r, art.coarse.depth};
        OcclusionMask m = occlusion_mask(ref_dv, novel_dv, tau_);
        occ = first ? std::move(m) : intersect(occ, m);
        first = false;
      }
      art.occlusion = occ.mask;
      art.vis = visibility_map({cam_r, art.coarse}, refined_order_, occ, cfg_.latent_size);

      Conditioning cond;
      cond.depth = coarse_l.depth;
      cond.prompt = prompt_;
      cond.guidance = cfg_.guidance;
      const Trajectory traj =
          invert_trajectory(art.coarse_latent, *denoiser_, cond, sched_, cfg_.inversion_steps);

      Conditioning repaint_cond = cond;
      const Denoiser* repaint_denoiser = denoiser_.get();
      if (cfg_.per_step_reference) {
        repaint_denoiser = per_step_denoiser_.get();
      } else {
        repaint_cond.reference_features = reference_features_;
      }
      const Latent fine_latent = repaint_denoise(traj.latents.back(), traj, *repaint_denoiser,
                                                 repaint_cond, art.vis, sched_);
      art.fine = fine_latent.data;
      for (double& v : art.fine.data()) v = clamp01(v);
    }

    refined_.emplace(view.azimuth, RenderedView{cam_r, art.coarse});
    refined_order_.push_back({cam_r, art.coarse});
    texture_views_.push_back({cam_l, art.fine, art.fine_mask});
    if (cfg_.incremental_texture)
      working_mesh_ = refine_texture(working_mesh_, texture_views_, cfg_.optimizer_steps,
                                     cfg_.optimizer_lr);
    return art;
  }

  static Image resample_texture(const Image& src, int size) {
    Image out(size, size, 3, 0.0);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const Vec3 c = sample_texture(src, (x + 0.5) / size, (y + 0.5) / size);
        for (int ch = 0; ch < 3; ++ch) out(y, x, ch) = c[ch];
      }
    return out;
  }

  GBuffer render_coarse(const CameraView& cam) const {
    if (assets_.cloud) return render(*assets_.cloud, cam, Vec3::Zero());
    return rasterize(working_mesh_, cam);
  }

  // alpha > 0.5 keeps the solid interior; for mesh renders alpha is exactly
  // 0 or 1, for splats it trims edge pixels whose color is mostly background.
  static MaskImage coverage_mask(const GBuffer& g) {
    MaskImage m(g.height(), g.width(), 1, 0);
    for (int y = 0; y < g.height(); ++y)
      for (int x = 0; x < g.width(); ++x) m(y, x) = g.alpha(y, x) > 0.5 ? 1 : 0;
    return m;
  }

  Image resolve_reference() const {
    if (assets_.reference) {
      Image ref = *assets_.reference;
      if (ref.height() == cfg_.render_size && cfg_.render_size != cfg_.latent_size)
        ref = average_pool(ref, cfg_.render_size / cfg_.latent_size);
      if (ref.height() != cfg_.latent_size || ref.width() != cfg_.latent_size ||
          ref.channels() != 3)
        throw std::invalid_argument(
            "pipeline: reference image must be latent- or render-sized RGB");
      return ref;
    }
    const GBuffer g = render_coarse(latent_camera(0.0));
    return g.color;
  }

  /// Reference K/V come from a denoiser pass over the encoded reference at
  /// the visited timestep nearest T/2 (single capture), or per visited
  /// timestep along the reference's own inverted trajectory when configured.
  void setup_reference_features() {
    const GBuffer ref_g = render_coarse(latent_camera(0.0));
    Conditioning cond;
    cond.depth = ref_g.depth;
    cond.prompt = prompt_;
    cond.guidance = cfg_.guidance;
    if (!cfg_.per_step_reference) {
      int t_mid = sched_.step_indices.front();
      for (int t : sched_.step_indices)
        if (std::abs(t - sched_.T / 2) < std::abs(t_mid - sched_.T / 2)) t_mid = t;
      reference_features_ = denoiser_->capture_features(reference_, t_mid, cond);
      return;
    }
    const Trajectory ref_traj =
        invert_trajectory(reference_, *denoiser_, cond, sched_, cfg_.inversion_steps);
    std::map<int, AttentionFeatures> by_t;
    for (const Latent& l : ref_traj.latents)
      if (l.t > 0) by_t.emplace(l.t, denoiser_->capture_features(l.data, l.t, cond));
    per_step_denoiser_ = std::make_unique<detail::PerStepInjectingDenoiser>(*denoiser_, by_t);
  }

  double total_masked_mse(const TexturedMesh& mesh) const {
    double total = 0.0;
    for (const RefinementView& tv : texture_views_) {
      const GBuffer g = rasterize(mesh, tv.cam);
      total += mse_loss(g, tv.target, tv.mask).value;
    }
    return total;
  }

  PipelineConfig cfg_;
  PipelineAssets assets_;
  ViewSchedule schedule_;
  double bounding_radius_ = 0.0;
  double tau_ = 0.0;
  TexturedMesh working_mesh_;
  TexturedMesh original_mesh_;
  std::unique_ptr<ToyDenoiser> denoiser_;
  std::unique_ptr<detail::PerStepInjectingDenoiser> per_step_denoiser_;
  NoiseSchedule sched_;
  Image reference_;
  Eigen::VectorXd prompt_;
  AttentionFeatures reference_features_;
  std::map<double, RenderedView> refined_;
  std::vector<RenderedView> refined_order_;
  std::vector<RefinementView> texture_views_;
};

/// Full run: schedule, per-view refinement, texture optimization, metrics.
inline RunResult run_pipeline(const PipelineConfig& cfg, const PipelineAssets& assets) {
  ProgressiveRefiner refiner(cfg, assets);
  std::vector<ViewArtifacts> views;
  for (const ViewSpec& view : refiner.schedule().views) views.push_back(refiner.refine_view(view));
  return refiner.finish(std::move(views));
}

}  // namespace retex
