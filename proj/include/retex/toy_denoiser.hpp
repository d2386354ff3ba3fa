// License: Apache 2.0. See LICENSE file in root directory.
// Copyright(c) 2026 retex contributors. All Rights Reserved.

#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "retex/diffusion.hpp"
#include "retex/rng.hpp"

namespace retex {

/// Frozen-weight stand-in for a pretrained noise predictor. Architecture:
/// conv over (image + depth) channels -> prompt and timestep biases -> tanh
/// -> patch-token single-head attention (capturable / injectable K,V)
/// broadcast back to pixels -> linear head. Every weight comes from one
/// seeded generator, so outputs are a pure function of (x, t, cond, seed).
struct ToyDenoiserConfig {
  int height = 64;
  int width = 64;
  int channels = 3;
  int features = 16;   // token width d
  int patch = 8;       // token grid cell, must divide height and width
  int conv_radius = 1; // 0 makes the non-attention path purely pointwise
  bool use_attention = true;
  int prompt_dim = 16;
  int time_dim = 8;
  double head_scale = 0.02;  // keeps the map Lipschitz-small so inversion contracts
  uint64_t seed = 0;
};

class ToyDenoiser final : public Denoiser {
 public:
  explicit ToyDenoiser(const ToyDenoiserConfig& cfg) : cfg_(cfg) {
    if (cfg.height < 1 || cfg.width < 1 || cfg.channels < 1 || cfg.features < 1)
      throw std::invalid_argument("toy denoiser: bad geometry");
    if (cfg.patch < 1 || cfg.height % cfg.patch != 0 || cfg.width % cfg.patch != 0)
      throw std::invalid_argument("toy denoiser: patch must divide the image size");
    if (cfg.conv_radius < 0) throw std::invalid_argument("toy denoiser: negative conv radius");
    Rng rng(cfg.seed);
    const int cin = cfg.channels + 1;  // + depth plane
    const int k = 2 * cfg.conv_radius + 1;
    const double conv_scale = 1.0 / std::sqrt(static_cast<double>(cin) * k * k);
    conv_ = random_matrix(rng, cfg.features, cin * k * k, conv_scale);
    conv_bias_ = random_vector(rng, cfg.features, 0.1);
    prompt_proj_ = random_matrix(rng, cfg.features, cfg.prompt_dim,
                                 0.5 / std::sqrt(static_cast<double>(cfg.prompt_dim)));
    time_proj_ = random_matrix(rng, cfg.features, cfg.time_dim,
                               0.5 / std::sqrt(static_cast<double>(cfg.time_dim)));
    const double attn_scale = 1.0 / std::sqrt(static_cast<double>(cfg.features));
    wq_ = random_matrix(rng, cfg.features, cfg.features, attn_scale);
    wk_ = random_matrix(rng, cfg.features, cfg.features, attn_scale);
    wv_ = random_matrix(rng, cfg.features, cfg.features, attn_scale);
    head_ = random_matrix(rng, cfg.channels, cfg.features, attn_scale);
  }

  const ToyDenoiserConfig& config() const { return cfg_; }

  Image predict_noise(const Image& x, int t, const Conditioning& cond) const override {
    AttentionFeatures unused;
    return forward(x, t, cond, true, unused);
  }

  AttentionFeatures capture_features(const Image& x, int t,
                                     const Conditioning& cond) const override {
    AttentionFeatures feats;
    forward(x, t, cond, false, feats);
    return feats;
  }

 private:
  static Eigen::MatrixXd random_matrix(Rng& rng, int rows, int cols, double scale) {
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = scale * rng.normal();
    return m;
  }

  static Eigen::VectorXd random_vector(Rng& rng, int n, double scale) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = scale * rng.normal();
    return v;
  }

  Eigen::VectorXd time_embedding(int t) const {
    Eigen::VectorXd e(cfg_.time_dim);
    const double tau = static_cast<double>(t) / 1000.0;
    for (int j = 0; j < cfg_.time_dim / 2; ++j) {
      const double w = kPi_ * std::pow(2.0, j);
      e[2 * j] = std::sin(w * tau);
      e[2 * j + 1] = std::cos(w * tau);
    }
    for (int j = 2 * (cfg_.time_dim / 2); j < cfg_.time_dim; ++j) e[j] = tau;
    return e;
  }

  /// Bounded depth input: disparity in (0,1], 0 where depth is missing.
  double depth_input(const Image& depth, int y, int x) const {
    const double d = depth(y, x);
    return std::isfinite(d) && d > 0.0 ? 1.0 / (1.0 + d) : 0.0;
  }

  Image forward(const Image& x, int t, const Conditioning& cond, bool apply_injection,
                AttentionFeatures& captured) const {
    if (x.height() != cfg_.height || x.width() != cfg_.width || x.channels() != cfg_.channels)
      throw std::invalid_argument("toy denoiser: latent shape mismatch");
    if (cond.depth && (cond.depth->height() != cfg_.height || cond.depth->width() != cfg_.width))
      throw std::invalid_argument("toy denoiser: depth conditioning shape mismatch");
    if (cond.prompt && cond.prompt->size() != cfg_.prompt_dim)
      throw std::invalid_argument("toy denoiser: prompt embedding size mismatch");
    if (cond.reference_features && !cfg_.use_attention)
      throw std::invalid_argument("toy denoiser: feature injection requires attention");

    const int h = cfg_.height, w = cfg_.width, f = cfg_.features;
    const int cin = cfg_.channels + 1;
    const int r = cfg_.conv_radius;
    const int k = 2 * r + 1;

    Eigen::VectorXd bias = conv_bias_ + time_proj_ * time_embedding(t);
    if (cond.prompt) bias += prompt_proj_ * (*cond.prompt);

    // Activations stored feature-major: act[fi][y*w + x].
    std::vector<Eigen::VectorXd> act(static_cast<size_t>(f), Eigen::VectorXd::Zero(h * w));
    Eigen::VectorXd in(cin * k * k);
    Eigen::VectorXd pre(f);
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx) {
        int slot = 0;
        for (int dy = -r; dy <= r; ++dy)
          for (int dx = -r; dx <= r; ++dx) {
            const int sy = y + dy, sx = xx + dx;
            const bool inside = sy >= 0 && sy < h && sx >= 0 && sx < w;
            for (int c = 0; c < cfg_.channels; ++c) in[slot++] = inside ? x(sy, sx, c) : 0.0;
            in[slot++] = inside && cond.depth ? depth_input(*cond.depth, sy, sx) : 0.0;
          }
        pre.noalias() = conv_ * in;
        pre += bias;
        for (int fi = 0; fi < f; ++fi) act[static_cast<size_t>(fi)][y * w + xx] = std::tanh(pre[fi]);
      }
    if (cfg_.use_attention) {
      const int gy = h / cfg_.patch, gx = w / cfg_.patch;
      const int n_tok = gy * gx;
      Eigen::MatrixXd tokens(n_tok, f);
      const double inv_patch = 1.0 / (static_cast<double>(cfg_.patch) * cfg_.patch);
      for (int ty = 0; ty < gy; ++ty)
        for (int tx = 0; tx < gx; ++tx) {
          for (int fi = 0; fi < f; ++fi) {
            double acc = 0.0;
            for (int dy = 0; dy < cfg_.patch; ++dy)
              for (int dx = 0; dx < cfg_.patch; ++dx)
                acc += act[static_cast<size_t>(fi)][(ty * cfg_.patch + dy) * w + tx * cfg_.patch + dx];
            tokens(ty * gx + tx, fi) = acc * inv_patch;
          }
        }
      const Eigen::MatrixXd q = tokens * wq_.transpose();
      captured.keys = tokens * wk_.transpose();
      captured.values = tokens * wv_.transpose();
      const AttentionFeatures* feats = &captured;
      if (apply_injection && cond.reference_features) feats = &*cond.reference_features;
      const Eigen::MatrixXd attended = attention(q, *feats);
      for (int ty = 0; ty < gy; ++ty)
        for (int tx = 0; tx < gx; ++tx)
          for (int fi = 0; fi < f; ++fi) {
            const double add = attended(ty * gx + tx, fi);
            for (int dy = 0; dy < cfg_.patch; ++dy)
              for (int dx = 0; dx < cfg_.patch; ++dx)
                act[static_cast<size_t>(fi)][(ty * cfg_.patch + dy) * w + tx * cfg_.patch + dx] += add;
          }
    }

    Image eps(h, w, cfg_.channels, 0.0);
    for (int y = 0; y < h; ++y)
      for (int xx = 0; xx < w; ++xx)
        for (int c = 0; c < cfg_.channels; ++c) {
          double acc = 0.0;
          for (int fi = 0; fi < f; ++fi) acc += head_(c, fi) * act[static_cast<size_t>(fi)][y * w + xx];
          eps(y, xx, c) = cfg_.head_scale * acc;
        }
    return eps;
  }

  static constexpr double kPi_ = 3.14159265358979323846;

  ToyDenoiserConfig cfg_;
  Eigen::MatrixXd conv_;
  Eigen::VectorXd conv_bias_;
  Eigen::MatrixXd prompt_proj_;
  Eigen::MatrixXd time_proj_;
  Eigen::MatrixXd wq_, wk_, wv_, head_;
};

inline ToyDenoiser toy_denoiser_build(uint64_t seed, ToyDenoiserConfig cfg = {}) {
  cfg.seed = seed;
  return ToyDenoiser(cfg);
}

/// Fixed image-to-embedding surrogate: mean luminance over a coarse grid,
/// shifted to be roughly zero-centered.
inline Eigen::VectorXd image_prompt_embedding(const Image& img, int dim = 16) {
  if (img.channels() < 1) throw std::invalid_argument("prompt embedding: empty image");
  const int grid = static_cast<int>(std::lround(std::sqrt(static_cast<double>(dim))));
  if (grid * grid != dim) throw std::invalid_argument("prompt embedding: dim must be square");
  Eigen::VectorXd e(dim);
  for (int gy = 0; gy < grid; ++gy)
    for (int gx = 0; gx < grid; ++gx) {
      const int y0 = gy * img.height() / grid, y1 = (gy + 1) * img.height() / grid;
      const int x0 = gx * img.width() / grid, x1 = (gx + 1) * img.width() / grid;
      double acc = 0.0;
      int64_t n = 0;
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
          double lum = 0.0;
          if (img.channels() >= 3)
            lum = 0.2126 * img(y, x, 0) + 0.7152 * img(y, x, 1) + 0.0722 * img(y, x, 2);
          else
            lum = img(y, x, 0);
          acc += lum;
          ++n;
        }
      e[gy * grid + gx] = n > 0 ? acc / static_cast<double>(n) - 0.5 : 0.0;
    }
  return e;
}

}  // namespace retex
