// License: Apache 2.0. See LICENSE file in root directory.
// Copyright(c) 2026 retex contributors. All Rights Reserved.

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "retex/fixtures.hpp"
#include "retex/rng.hpp"
#include "retex/splat.hpp"

using namespace retex;

namespace {

CameraView front_camera(int size = 32, double f = 40.0, double dist = 4.0) {
  CameraView cam;
  cam.fx = cam.fy = f;
  cam.cx = size / 2.0;
  cam.cy = size / 2.0;
  cam.rotation = Mat3::Identity();
  cam.translation = Vec3(0, 0, dist);  // camera at z = -dist looking at origin
  cam.width = cam.height = size;
  return cam;
}

Gaussian centered_gaussian(const CameraView& cam, int px, int py, double depth, const Vec3& color,
                           double opacity) {
  Gaussian g;
  g.mu = back_project(pixel_center(px, py), depth, cam);
  g.scale = Vec3(0.05, 0.05, 0.05);
  g.rotation = {1, 0, 0, 0};
  g.color = color;
  g.opacity = opacity;
  return g;
}

GaussianCloud random_cloud(Rng& rng, int count, double opacity_lo, double opacity_hi) {
  GaussianCloud cloud;
  for (int i = 0; i < count; ++i) {
    Gaussian g;
    g.mu = Vec3(rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6), rng.uniform(-0.6, 0.6));
    g.scale = Vec3(rng.uniform(0.05, 0.3), rng.uniform(0.05, 0.3), rng.uniform(0.05, 0.3));
    const Vec4 q = Vec4(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
    g.rotation = {q[0], q[1], q[2], q[3]};
    g.color = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
    g.opacity = rng.uniform(opacity_lo, opacity_hi);
    cloud.gaussians.push_back(g);
  }
  return cloud;
}

}  // namespace

TEST_CASE("covariance of an axis-aligned unit gaussian is the identity") {
  Gaussian g;
  g.mu = Vec3::Zero();
  g.scale = Vec3(1, 1, 1);
  g.rotation = {1, 0, 0, 0};
  CHECK((covariance(g) - Mat3::Identity()).norm() < 1e-12);
}

TEST_CASE("covariance rotates the squared scales") {
  Gaussian g;
  g.mu = Vec3::Zero();
  g.scale = Vec3(2, 1, 1);
  const double s = std::sqrt(0.5);
  g.rotation = {s, 0, 0, s};  // 90 degrees about z maps x onto y
  const Mat3 cov = covariance(g);
  Mat3 expected = Vec3(1, 4, 1).asDiagonal();
  CHECK((cov - expected).norm() < 1e-9);
}

TEST_CASE("covariance is symmetric positive semi-definite for random gaussians") {
  Rng rng(23);
  for (int i = 0; i < 100; ++i) {
    Gaussian g;
    g.mu = Vec3(rng.normal(), rng.normal(), rng.normal());
    g.scale = Vec3(rng.uniform(0.01, 3), rng.uniform(0.01, 3), rng.uniform(0.01, 3));
    const Vec4 q = Vec4(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
    g.rotation = {q[0], q[1], q[2], q[3]};
    const Mat3 cov = covariance(g);
    CHECK((cov - cov.transpose()).norm() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    CHECK(eig.eigenvalues().minCoeff() > -1e-12);
  }
}

TEST_CASE("empty cloud renders background, zero alpha, sentinel depth") {
  const CameraView cam = front_camera();
  const Vec3 bg(0.2, 0.4, 0.6);
  const GBuffer g = render(GaussianCloud{}, cam, bg);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      CHECK(g.color(y, x, 0) == 0.2);
      CHECK(g.color(y, x, 1) == 0.4);
      CHECK(g.color(y, x, 2) == 0.6);
      CHECK(g.alpha(y, x) == 0.0);
      CHECK_FALSE(g.has_depth(y, x));
    }
}

TEST_CASE("opacity one saturates at the alpha ceiling at the gaussian center") {
  // The compositing clamp keeps transmittance nonzero, so a fully opaque
  // gaussian contributes alpha 0.999 at its mean, not 1.
  const CameraView cam = front_camera();
  const Vec3 c(0.8, 0.3, 0.1);
  GaussianCloud cloud;
  cloud.gaussians.push_back(centered_gaussian(cam, 16, 16, 4.0, c, 1.0));
  const GBuffer g = render(cloud, cam, Vec3::Zero());
  CHECK(g.alpha(16, 16) == Catch::Approx(0.999).margin(1e-9));
  for (int ch = 0; ch < 3; ++ch)
    CHECK(g.color(16, 16, ch) == Catch::Approx(0.999 * c[ch]).margin(1e-9));
}

TEST_CASE("two half-opacity gaussians composite front to back") {
  const CameraView cam = front_camera();
  const Vec3 c1(1.0, 0.0, 0.0), c2(0.0, 1.0, 0.0), bg(0.0, 0.0, 1.0);
  GaussianCloud cloud;
  cloud.gaussians.push_back(centered_gaussian(cam, 16, 16, 5.0, c2, 0.5));  // farther first
  cloud.gaussians.push_back(centered_gaussian(cam, 16, 16, 3.0, c1, 0.5));
  const GBuffer g = render(cloud, cam, bg);
  CHECK(g.color(16, 16, 0) == Catch::Approx(0.5).margin(1e-9));
  CHECK(g.color(16, 16, 1) == Catch::Approx(0.25).margin(1e-9));
  CHECK(g.color(16, 16, 2) == Catch::Approx(0.25).margin(1e-9));
  CHECK(g.alpha(16, 16) == Catch::Approx(0.75).margin(1e-9));
  // depth is the alpha-weighted mean of per-gaussian camera depths
  CHECK(g.depth(16, 16) == Catch::Approx((0.5 * 3.0 + 0.25 * 5.0) / 0.75).margin(1e-9));
}

TEST_CASE("render matches brute-force compositing over all gaussians") {
  // Opacity is capped at 0.45 so every contribution the renderer's 3.5-sigma
  // screen bound drops is below 1e-3 and the full-sum oracle stays close.
  Rng rng(31);
  const CameraView cam = front_camera(32, 40.0, 4.0);
  for (int scene = 0; scene < 5; ++scene) {
    const GaussianCloud cloud = random_cloud(rng, 8, 0.05, 0.45);
    const Vec3 bg(0.1, 0.2, 0.3);
    const GBuffer g = render(cloud, cam, bg);
    for (int y = 0; y < cam.height; ++y)
      for (int x = 0; x < cam.width; ++x) {
        const auto ref = oracle::composite_pixel(cloud, cam, x + 0.5, y + 0.5, bg);
        for (int ch = 0; ch < 3; ++ch)
          REQUIRE(std::abs(g.color(y, x, ch) - ref.color[ch]) < 5e-3);
        REQUIRE(std::abs(g.alpha(y, x) - ref.alpha) < 5e-3);
      }
  }
}

TEST_CASE("render is invariant under permutation of the input list") {
  Rng rng(37);
  GaussianCloud cloud = random_cloud(rng, 12, 0.1, 0.9);
  const CameraView cam = front_camera();
  const GBuffer a = render(cloud, cam);
  std::mt19937 shuffler(99);
  std::shuffle(cloud.gaussians.begin(), cloud.gaussians.end(), shuffler);
  const GBuffer b = render(cloud, cam);
  CHECK(max_abs_diff(a.color, b.color) < 1e-12);
  CHECK(max_abs_diff(a.alpha, b.alpha) < 1e-12);
}

TEST_CASE("alpha never decreases as gaussians are appended") {
  Rng rng(41);
  const CameraView cam = front_camera();
  GaussianCloud cloud;
  GBuffer prev = render(cloud, cam);
  for (int i = 0; i < 6; ++i) {
    cloud.gaussians.push_back(random_cloud(rng, 1, 0.1, 0.9).gaussians[0]);
    const GBuffer cur = render(cloud, cam);
    for (int y = 0; y < cam.height; ++y)
      for (int x = 0; x < cam.width; ++x) REQUIRE(cur.alpha(y, x) >= prev.alpha(y, x) - 1e-12);
    prev = cur;
  }
}

TEST_CASE("pixel colors stay within the convex hull of contributors and background") {
  Rng rng(43);
  const CameraView cam = front_camera();
  const GaussianCloud cloud = random_cloud(rng, 10, 0.1, 0.9);
  const Vec3 bg(0.5, 0.5, 0.5);
  const GBuffer g = render(cloud, cam, bg);
  for (int ch = 0; ch < 3; ++ch) {
    double lo = bg[ch], hi = bg[ch];
    for (const Gaussian& gg : cloud.gaussians) {
      lo = std::min(lo, gg.color[ch]);
      hi = std::max(hi, gg.color[ch]);
    }
    for (int y = 0; y < cam.height; ++y)
      for (int x = 0; x < cam.width; ++x) {
        REQUIRE(g.color(y, x, ch) >= lo - 1e-12);
        REQUIRE(g.color(y, x, ch) <= hi + 1e-12);
      }
  }
}

TEST_CASE("front-to-back sort orders by depth with stable ties") {
  const CameraView cam = front_camera();
  GaussianCloud cloud;
  for (double z : {3.0, 1.0, 2.0})
    cloud.gaussians.push_back(centered_gaussian(cam, 16, 16, z, Vec3(1, 1, 1), 0.5));
  const std::vector<int> perm = sort_front_to_back(cloud, cam);
  CHECK(perm == std::vector<int>{1, 2, 0});

  GaussianCloud ties;
  for (int i = 0; i < 4; ++i)
    ties.gaussians.push_back(centered_gaussian(cam, 10 + i, 16, 2.0, Vec3(1, 1, 1), 0.5));
  CHECK(sort_front_to_back(ties, cam) == std::vector<int>{0, 1, 2, 3});

  Rng rng(47);
  const GaussianCloud rnd = random_cloud(rng, 25, 0.1, 0.9);
  std::vector<int> p = sort_front_to_back(rnd, cam);
  std::sort(p.begin(), p.end());
  for (int i = 0; i < 25; ++i) REQUIRE(p[static_cast<size_t>(i)] == i);
}

TEST_CASE("zero upstream gradient yields zero parameter gradients") {
  Rng rng(53);
  const CameraView cam = front_camera();
  const GaussianCloud cloud = random_cloud(rng, 5, 0.1, 0.9);
  const Image zero(cam.height, cam.width, 3, 0.0);
  const SplatGradients grads = render_backward(cloud, cam, Vec3::Zero(), zero);
  for (size_t i = 0; i < cloud.size(); ++i) {
    CHECK(grads.d_color[i].norm() == 0.0);
    CHECK(grads.d_opacity[i] == 0.0);
  }
}

TEST_CASE("single gaussian color gradient equals its alpha") {
  const CameraView cam = front_camera();
  GaussianCloud cloud;
  cloud.gaussians.push_back(centered_gaussian(cam, 16, 16, 4.0, Vec3(0.3, 0.6, 0.9), 0.7));
  const GBuffer fwd = render(cloud, cam);
  Image up(cam.height, cam.width, 3, 0.0);
  up(16, 16, 1) = 1.0;  // L = green channel at the center pixel
  const SplatGradients grads = render_backward(cloud, cam, Vec3::Zero(), up);
  CHECK(grads.d_color[0][1] == Catch::Approx(fwd.alpha(16, 16)).margin(1e-12));
  CHECK(grads.d_color[0][0] == 0.0);
  CHECK(grads.d_color[0][2] == 0.0);
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng rng(59);
  const CameraView cam = front_camera(24, 30.0, 4.0);
  const Vec3 bg(0.15, 0.25, 0.35);
  for (int scene = 0; scene < 3; ++scene) {
    GaussianCloud cloud = random_cloud(rng, 5, 0.1, 0.85);
    Image up(cam.height, cam.width, 3, 0.0);
    for (double& v : up.data()) v = rng.uniform(-1, 1);
    const auto loss = [&](const GaussianCloud& c) {
      const GBuffer g = render(c, cam, bg);
      double l = 0.0;
      for (size_t i = 0; i < up.data().size(); ++i) l += up.data()[i] * g.color.data()[i];
      return l;
    };
    const SplatGradients grads = render_backward(cloud, cam, bg, up);
    const double h = 1e-4;
    for (size_t i = 0; i < cloud.size(); ++i) {
      for (int ch = 0; ch < 3; ++ch) {
        GaussianCloud plus = cloud, minus = cloud;
        plus.gaussians[i].color[ch] += h;
        minus.gaussians[i].color[ch] -= h;
        const double fd = (loss(plus) - loss(minus)) / (2 * h);
        const double ana = grads.d_color[i][ch];
        REQUIRE(std::abs(fd - ana) <= 1e-3 * std::max({std::abs(fd), std::abs(ana), 1e-6}));
      }
      GaussianCloud plus = cloud, minus = cloud;
      plus.gaussians[i].opacity += h;
      minus.gaussians[i].opacity -= h;
      const double fd = (loss(plus) - loss(minus)) / (2 * h);
      const double ana = grads.d_opacity[i];
      REQUIRE(std::abs(fd - ana) <= 1e-3 * std::max({std::abs(fd), std::abs(ana), 1e-6}));
    }
  }
}

TEST_CASE("render is independent of the thread count") {
  Rng rng(61);
  const GaussianCloud cloud = random_cloud(rng, 40, 0.1, 0.9);
  const CameraView cam = front_camera(64, 80.0, 4.0);
  set_max_threads(1);
  const GBuffer a = render(cloud, cam, Vec3(0.1, 0.1, 0.1));
  Image up(cam.height, cam.width, 3, 0.0);
  for (double& v : up.data()) v = rng.uniform(-1, 1);
  const SplatGradients ga = render_backward(cloud, cam, Vec3(0.1, 0.1, 0.1), up);
  set_max_threads(8);
  const GBuffer b = render(cloud, cam, Vec3(0.1, 0.1, 0.1));
  const SplatGradients gb = render_backward(cloud, cam, Vec3(0.1, 0.1, 0.1), up);
  set_max_threads(1);
  CHECK(max_abs_diff(a.color, b.color) == 0.0);
  CHECK(max_abs_diff(a.alpha, b.alpha) == 0.0);
  for (size_t i = 0; i < cloud.size(); ++i) {
    CHECK((ga.d_color[i] - gb.d_color[i]).norm() == 0.0);
    CHECK(ga.d_opacity[i] == gb.d_opacity[i]);
  }
}

TEST_CASE("gaussian validation rejects out-of-range parameters") {
  Gaussian g;
  g.mu = Vec3::Zero();
  g.scale = Vec3(1, 1, 1);
  g.rotation = {1, 0, 0, 0};
  g.color = Vec3(0.5, 0.5, 0.5);
  g.opacity = 0.5;
  CHECK_NOTHROW(validate_gaussian(g));
  Gaussian bad = g;
  bad.scale.y() = 0.0;
  CHECK_THROWS_AS(validate_gaussian(bad), std::invalid_argument);
  bad = g;
  bad.rotation = {2, 0, 0, 0};
  CHECK_THROWS_AS(validate_gaussian(bad), std::invalid_argument);
  bad = g;
  bad.opacity = 1.5;
  CHECK_THROWS_AS(validate_gaussian(bad), std::invalid_argument);
  bad = g;
  bad.color.x() = -0.1;
  CHECK_THROWS_AS(validate_gaussian(bad), std::invalid_argument);
}

TEST_CASE("gaussians behind the camera are skipped and counted") {
  const CameraView cam = front_camera();
  GaussianCloud cloud;
  Gaussian g = centered_gaussian(cam, 16, 16, 3.0, Vec3(1, 0, 0), 0.5);
  cloud.gaussians.push_back(g);
  g.mu = cam.eye() - cam.forward() * 2.0;  // behind the eye
  cloud.gaussians.push_back(g);
  SplatRenderStats stats;
  const GBuffer out = render(cloud, cam, Vec3::Zero(), &stats);
  CHECK(stats.skipped_behind == 1);
  CHECK(stats.skipped_singular == 0);
  CHECK(out.color(16, 16, 0) > 0.4);
}
