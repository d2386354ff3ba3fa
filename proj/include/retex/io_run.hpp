// License: Apache 2.0. See LICENSE file in root directory.
// Copyright(c) 2026 retex contributors. All Rights Reserved.

#pragma once

#include <cstdio>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "retex/config.hpp"
#include "retex/io_assets.hpp"
#include "retex/io_image.hpp"
#include "retex/pipeline.hpp"

namespace retex {

/// Directory names use the shortest decimal form of the azimuth ("40", "-40").
inline std::string format_azimuth(double azimuth) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%g", azimuth);
  return buf;
}

namespace detail {

/// JSON has no literal for non-finite numbers; +inf (identical images under
/// the PSNR metric) is stored as the string "inf" to keep the file valid.
inline nlohmann::ordered_json json_number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline Image mask_to_image(const MaskImage& m) {
  Image out(m.height(), m.width(), 1, 0.0);
  for (size_t i = 0; i < m.data().size(); ++i) out.data()[i] = m.data()[i] ? 1.0 : 0.0;
  return out;
}

}  // namespace detail

/// Writes one view's artifacts under <dir>/views/<azimuth>/. Usable on its
/// own so a failing run can persist the views it completed.
inline void save_view_artifacts(const std::string& dir, const ViewArtifacts& art) {
  namespace fs = std::filesystem;
  const fs::path vdir = fs::path(dir) / "views" / format_azimuth(art.azimuth);
  fs::create_directories(vdir);
  write_png((vdir / "coarse.png").string(), art.coarse.color);
  write_pfm((vdir / "depth.pfm").string(), art.coarse.depth);
  if (!art.occlusion.empty()) write_mask_png((vdir / "occlusion.png").string(), art.occlusion);
  if (!art.vis.values.empty()) write_png((vdir / "visibility.png").string(), art.vis.values);
  write_png((vdir / "fine.png").string(), art.fine);
}

/// Writes the run directory:
///   views/<azimuth>/{coarse.png, depth.pfm, occlusion.png, visibility.png, fine.png}
///   mesh/{refined.obj, refined.mtl, texture.png}
///   run.json
/// Content is a pure function of the config and inputs: no timestamps, no
/// thread counts, fixed key order.
inline void save_run(const std::string& dir, const RunConfig& cfg, const RunResult& result) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "views");
  fs::create_directories(fs::path(dir) / "mesh");

  for (const ViewArtifacts& art : result.views) save_view_artifacts(dir, art);

  save_mesh((fs::path(dir) / "mesh" / "refined.obj").string(), result.refined, "texture.png");

  nlohmann::ordered_json doc;
  doc["config"] = config_to_json(cfg);
  doc["schedule"] = nlohmann::ordered_json::array();
  for (const ViewSpec& v : result.schedule.views)
    doc["schedule"].push_back({{"azimuth", v.azimuth}, {"neighbors", v.neighbors}});
  doc["views"] = nlohmann::ordered_json::array();
  for (size_t i = 0; i < result.views.size(); ++i) {
    nlohmann::ordered_json entry;
    entry["azimuth"] = result.views[i].azimuth;
    entry["psnr"] = detail::json_number(i < result.view_psnr.size() ? result.view_psnr[i]
                                                                    : std::nan(""));
    doc["views"].push_back(entry);
  }
  doc["metrics"] = {{"masked_mse_before", detail::json_number(result.total_masked_mse_before)},
                    {"masked_mse_after", detail::json_number(result.total_masked_mse_after)}};

  const fs::path json_path = fs::path(dir) / "run.json";
  detail::FilePtr f = detail::open_file(json_path.string(), "wb");
  const std::string text = doc.dump(2) + "\n";
  if (std::fwrite(text.data(), 1, text.size(), f.get()) != text.size())
    throw IoError("failed to write " + json_path.string());
}

}  // namespace retex
