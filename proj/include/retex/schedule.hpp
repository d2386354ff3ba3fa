// License: Apache 2.0. See LICENSE file in root directory.
// Copyright(c) 2026 retex contributors. All Rights Reserved.

#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "retex/error.hpp"

namespace retex {

/// Variance-preserving noise schedule: alphas[t] is the signal rate,
/// sigmas[t] the noise rate, alphas[t]^2 + sigmas[t]^2 = 1 for every t.
/// step_indices are the S timesteps a strided sampler actually visits,
/// ascending, ending at T.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> alphas;  // size T+1, alphas[0] = 1
  std::vector<double> sigmas;  // size T+1, sigmas[0] = 0
  std::vector<int> step_indices;

  bool is_step(int t) const {
    return std::binary_search(step_indices.begin(), step_indices.end(), t);
  }

  /// Previous visited timestep below t, or 0 when t is the first one.
  int prev_step(int t) const {
    auto it = std::lower_bound(step_indices.begin(), step_indices.end(), t);
    if (it == step_indices.end() || *it != t)
      throw std::invalid_argument("schedule: timestep " + std::to_string(t) + " is not visited");
    return it == step_indices.begin() ? 0 : *(it - 1);
  }

  /// Next visited timestep above t; t may be 0 or any visited step except the last.
  int next_step(int t) const {
    auto it = std::upper_bound(step_indices.begin(), step_indices.end(), t);
    if (it == step_indices.end())
      throw std::invalid_argument("schedule: no visited timestep above " + std::to_string(t));
    return *it;
  }
};

inline void validate_schedule(const NoiseSchedule& s) {
  if (s.T < 1 || s.alphas.size() != static_cast<size_t>(s.T + 1) ||
      s.sigmas.size() != s.alphas.size())
    throw std::invalid_argument("schedule: inconsistent sizes");
  if (std::abs(s.alphas[0] - 1.0) > 1e-12 || std::abs(s.sigmas[0]) > 1e-12)
    throw std::invalid_argument("schedule: alpha_0 must be 1 and sigma_0 must be 0");
  for (int t = 0; t <= s.T; ++t) {
    const double n = s.alphas[t] * s.alphas[t] + s.sigmas[t] * s.sigmas[t];
    if (std::abs(n - 1.0) > 1e-9)
      throw std::invalid_argument("schedule: alpha^2 + sigma^2 != 1 at t=" + std::to_string(t));
    if (t > 0 && s.alphas[t] > s.alphas[t - 1] + 1e-12)
      throw std::invalid_argument("schedule: alpha must be non-increasing");
  }
  if (s.step_indices.empty()) throw std::invalid_argument("schedule: no visited steps");
  int prev = 0;
  for (int t : s.step_indices) {
    if (t <= prev || t > s.T) throw std::invalid_argument("schedule: visited steps must ascend in (0, T]");
    prev = t;
  }
}

/// Scaled-linear beta ramp (beta interpolated in sqrt space) with S uniformly
/// strided visited steps, the last at T.
inline NoiseSchedule make_schedule(int T = 1000, int S = 30, double beta_start = 0.00085,
                                   double beta_end = 0.012) {
  if (T < 1 || S < 1 || S > T) throw std::invalid_argument("make_schedule: need 1 <= S <= T");
  if (!(beta_start > 0.0) || !(beta_end >= beta_start) || !(beta_end < 1.0))
    throw std::invalid_argument("make_schedule: bad beta range");
  NoiseSchedule s;
  s.T = T;
  s.alphas.resize(static_cast<size_t>(T) + 1);
  s.sigmas.resize(static_cast<size_t>(T) + 1);
  s.alphas[0] = 1.0;
  s.sigmas[0] = 0.0;
  const double r0 = std::sqrt(beta_start);
  const double r1 = std::sqrt(beta_end);
  double cumulative = 1.0;
  for (int t = 1; t <= T; ++t) {
    const double f = T > 1 ? static_cast<double>(t - 1) / (T - 1) : 0.0;
    const double root = r0 + f * (r1 - r0);
    cumulative *= 1.0 - root * root;
    s.alphas[t] = std::sqrt(cumulative);
    s.sigmas[t] = std::sqrt(1.0 - cumulative);
  }
  s.step_indices.reserve(static_cast<size_t>(S));
  for (int k = 1; k <= S; ++k) {
    const int t = static_cast<int>(std::lround(static_cast<double>(k) * T / S));
    if (s.step_indices.empty() || s.step_indices.back() < t) s.step_indices.push_back(t);
  }
  validate_schedule(s);
  return s;
}

}  // namespace retex
