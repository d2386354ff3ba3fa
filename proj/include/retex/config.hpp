// License: Apache 2.0. See LICENSE file in root directory.
// Copyright(c) 2026 retex contributors. All Rights Reserved.

#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <string>

#include <json.hpp>

#include "retex/error.hpp"

namespace retex {

/// Numeric knobs of one refinement run. tau is stored as a fraction of the
/// scene bounding radius; the absolute depth threshold is derived per asset.
/// Thread count is intentionally not part of the config: outputs must not
/// depend on it.
struct PipelineConfig {
  uint64_t seed = 1;
  double interval = 40.0;
  double elevation = 0.0;
  int inversion_steps = 30;
  double guidance = 5.0;
  double tau_scale = 0.01;
  int render_size = 256;
  int latent_size = 64;
  int texture_size = 256;
  int optimizer_steps = 200;
  double optimizer_lr = 0.5;
  bool per_step_reference = false;
  bool incremental_texture = false;
};

/// File form: the pipeline knobs plus asset paths.
struct RunConfig : PipelineConfig {
  std::string mesh;       // OBJ path, required
  std::string cloud;      // PLY path, optional: coarse renders use splats when set
  std::string reference;  // PNG path, optional: defaults to the coarse render at azimuth 0
  std::string output_dir = "run_out";
};

inline void validate_pipeline_config(const PipelineConfig& c) {
  auto fail = [](const std::string& msg) { throw IoError("config: " + msg); };
  if (!(c.interval > 0.0) || c.interval > 180.0) fail("interval must be in (0, 180]");
  if (c.elevation <= -90.0 || c.elevation >= 90.0) fail("elevation must be in (-90, 90)");
  if (c.inversion_steps < 1) fail("inversion_steps must be positive");
  if (!(c.guidance > 0.0)) fail("guidance must be positive");
  if (!(c.tau_scale > 0.0)) fail("tau_scale must be positive");
  if (c.latent_size < 8) fail("latent_size must be at least 8");
  if (c.render_size < c.latent_size || c.render_size % c.latent_size != 0)
    fail("render_size must be a positive multiple of latent_size");
  if (c.texture_size < 1) fail("texture_size must be positive");
  if (c.optimizer_steps < 1) fail("optimizer_steps must be positive");
  if (!(c.optimizer_lr > 0.0) || c.optimizer_lr > 1.0) fail("optimizer_lr must be in (0, 1]");
}

inline void validate_config(const RunConfig& c) {
  validate_pipeline_config(c);
  if (c.mesh.empty()) throw IoError("config: mesh path is required");
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known = {
      "seed",          "interval",       "elevation",        "inversion_steps",
      "guidance",      "tau_scale",      "render_size",      "latent_size",
      "texture_size",  "optimizer_steps", "optimizer_lr",    "per_step_reference",
      "incremental_texture", "mesh",     "cloud",            "reference",
      "output_dir"};
  if (!j.is_object()) throw IoError("config: top level must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known.count(key)) throw IoError("config: unknown key '" + key + "'");
  }
  RunConfig c;
  try {
    if (j.contains("seed")) c.seed = j.at("seed").get<uint64_t>();
    if (j.contains("interval")) c.interval = j.at("interval").get<double>();
    if (j.contains("elevation")) c.elevation = j.at("elevation").get<double>();
    if (j.contains("inversion_steps")) c.inversion_steps = j.at("inversion_steps").get<int>();
    if (j.contains("guidance")) c.guidance = j.at("guidance").get<double>();
    if (j.contains("tau_scale")) c.tau_scale = j.at("tau_scale").get<double>();
    if (j.contains("render_size")) c.render_size = j.at("render_size").get<int>();
    if (j.contains("latent_size")) c.latent_size = j.at("latent_size").get<int>();
    if (j.contains("texture_size")) c.texture_size = j.at("texture_size").get<int>();
    if (j.contains("optimizer_steps")) c.optimizer_steps = j.at("optimizer_steps").get<int>();
    if (j.contains("optimizer_lr")) c.optimizer_lr = j.at("optimizer_lr").get<double>();
    if (j.contains("per_step_reference"))
      c.per_step_reference = j.at("per_step_reference").get<bool>();
    if (j.contains("incremental_texture"))
      c.incremental_texture = j.at("incremental_texture").get<bool>();
    if (j.contains("mesh")) c.mesh = j.at("mesh").get<std::string>();
    if (j.contains("cloud")) c.cloud = j.at("cloud").get<std::string>();
    if (j.contains("reference")) c.reference = j.at("reference").get<std::string>();
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("config: ") + e.what());
  }
  validate_config(c);
  return c;
}

inline nlohmann::ordered_json config_to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["interval"] = c.interval;
  j["elevation"] = c.elevation;
  j["inversion_steps"] = c.inversion_steps;
  j["guidance"] = c.guidance;
  j["tau_scale"] = c.tau_scale;
  j["render_size"] = c.render_size;
  j["latent_size"] = c.latent_size;
  j["texture_size"] = c.texture_size;
  j["optimizer_steps"] = c.optimizer_steps;
  j["optimizer_lr"] = c.optimizer_lr;
  j["per_step_reference"] = c.per_step_reference;
  j["incremental_texture"] = c.incremental_texture;
  j["mesh"] = c.mesh;
  j["cloud"] = c.cloud;
  j["reference"] = c.reference;
  j["output_dir"] = c.output_dir;
  return j;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("config: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("config: parse error in '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

}  // namespace retex
