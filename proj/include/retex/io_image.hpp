// License: Apache 2.0. See LICENSE file in root directory.
// Copyright(c) 2026 retex contributors. All Rights Reserved.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include <png.h>

#include "retex/error.hpp"
#include "retex/gbuffer.hpp"
#include "retex/raster.hpp"

namespace retex {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw IoError("cannot open '" + path + "'");
  return f;
}

}  // namespace detail

/// 8-bit PNG writer with pinned compression settings (level 6, filter NONE,
/// no ancillary chunks), so identical rasters produce identical bytes.
/// Accepts 1-channel (gray) or 3-channel (RGB) images in [0,1].
inline void write_png(const std::string& path, const Image& img) {
  if (img.channels() != 1 && img.channels() != 3)
    throw std::invalid_argument("write_png: image must have 1 or 3 channels");
  if (img.height() < 1 || img.width() < 1) throw std::invalid_argument("write_png: empty image");
  detail::FilePtr file = detail::open_file(path, "wb");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("write_png: cannot allocate encoder");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoError("write_png: cannot allocate encoder info");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("write_png: encode failed for '" + path + "'");
  }
  png_init_io(png, file.get());
  png_set_compression_level(png, 6);
  png_set_filter(png, 0, PNG_FILTER_NONE);
  const int color_type = img.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY;
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width()),
               static_cast<png_uint_32>(img.height()), 8, color_type, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<uint8_t> row(static_cast<size_t>(img.width()) * img.channels());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c)
        row[static_cast<size_t>(x) * img.channels() + c] =
            static_cast<uint8_t>(std::lround(clamp01(img(y, x, c)) * 255.0));
    png_write_row(png, row.data());
  }
  png_write_end(png, info);
  png_destroy_write_struct(&png, &info);
}

inline void write_mask_png(const std::string& path, const MaskImage& mask) {
  Image img(mask.height(), mask.width(), 1, 0.0);
  for (int y = 0; y < mask.height(); ++y)
    for (int x = 0; x < mask.width(); ++x) img(y, x) = mask(y, x) ? 1.0 : 0.0;
  write_png(path, img);
}

/// Reads an 8/16-bit PNG into [0,1]; palette expands to RGB, alpha is
/// stripped, 16-bit narrows to 8. Result has 1 or 3 channels.
inline Image read_png(const std::string& path) {
  detail::FilePtr file = detail::open_file(path, "rb");
  uint8_t sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8))
    throw IoError("read_png: '" + path + "' is not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoError("read_png: cannot allocate decoder");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoError("read_png: cannot allocate decoder info");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("read_png: decode failed for '" + path + "'");
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const int channels = static_cast<int>(png_get_channels(png, info));
  if (channels != 1 && channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("read_png: unsupported channel count in '" + path + "'");
  }

  Image img(height, width, channels, 0.0);
  std::vector<uint8_t> row(static_cast<size_t>(width) * channels);
  for (int y = 0; y < height; ++y) {
    png_read_row(png, row.data(), nullptr);
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c)
        img(y, x, c) = row[static_cast<size_t>(x) * channels + c] / 255.0;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

namespace detail {

inline void write_pfm_frame(std::FILE* f, const Image& img, const std::string& path) {
  if (img.channels() != 1 && img.channels() != 3)
    throw std::invalid_argument("write_pfm: image must have 1 or 3 channels");
  const std::string header = std::string(img.channels() == 3 ? "PF" : "Pf") + "\n" +
                             std::to_string(img.width()) + " " + std::to_string(img.height()) +
                             "\n-1.0\n";
  if (std::fwrite(header.data(), 1, header.size(), f) != header.size())
    throw IoError("write_pfm: short write to '" + path + "'");
  std::vector<float> row(static_cast<size_t>(img.width()) * img.channels());
  for (int y = img.height() - 1; y >= 0; --y) {
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c)
        row[static_cast<size_t>(x) * img.channels() + c] = static_cast<float>(img(y, x, c));
    if (std::fwrite(row.data(), sizeof(float), row.size(), f) != row.size())
      throw IoError("write_pfm: short write to '" + path + "'");
  }
}

}  // namespace detail

/// PFM float map, 1 (Pf) or 3 (PF) channels, little-endian (negative scale),
/// rows stored bottom-up per the format. Non-finite values pass through,
/// which is what depth sentinels need.
inline void write_pfm(const std::string& path, const Image& img) {
  detail::FilePtr file = detail::open_file(path, "wb");
  detail::write_pfm_frame(file.get(), img, path);
}

namespace detail {

inline std::string pfm_token(std::FILE* f, const std::string& path) {
  std::string tok;
  int ch;
  while ((ch = std::fgetc(f)) != EOF && (ch == ' ' || ch == '\n' || ch == '\r' || ch == '\t')) {
  }
  if (ch == EOF) throw IoError("read_pfm: truncated header in '" + path + "'");
  do {
    tok.push_back(static_cast<char>(ch));
    ch = std::fgetc(f);
  } while (ch != EOF && ch != ' ' && ch != '\n' && ch != '\r' && ch != '\t');
  return tok;
}

inline Image read_pfm_stream(std::FILE* f, const std::string& path) {
  const std::string magic = pfm_token(f, path);
  if (magic != "PF" && magic != "Pf") throw IoError("read_pfm: bad magic in '" + path + "'");
  const int channels = magic == "PF" ? 3 : 1;
  int width = 0, height = 0;
  double scale = 0.0;
  try {
    width = std::stoi(pfm_token(f, path));
    height = std::stoi(pfm_token(f, path));
    scale = std::stod(pfm_token(f, path));
  } catch (const std::exception&) {
    throw IoError("read_pfm: malformed header in '" + path + "'");
  }
  if (width < 1 || height < 1 || scale == 0.0)
    throw IoError("read_pfm: bad dimensions or scale in '" + path + "'");
  const bool little_endian = scale < 0.0;
  Image img(height, width, channels, 0.0);
  std::vector<float> row(static_cast<size_t>(width) * channels);
  for (int y = height - 1; y >= 0; --y) {
    if (std::fread(row.data(), sizeof(float), row.size(), f) != row.size())
      throw IoError("read_pfm: truncated pixel data in '" + path + "'");
    for (float& v : row) {
      if (little_endian == (std::endian::native == std::endian::little)) continue;
      uint32_t bits = std::bit_cast<uint32_t>(v);
      bits = __builtin_bswap32(bits);
      v = std::bit_cast<float>(bits);
    }
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c) img(y, x, c) = row[static_cast<size_t>(x) * channels + c];
  }
  return img;
}

}  // namespace detail

inline Image read_pfm(const std::string& path) {
  detail::FilePtr file = detail::open_file(path, "rb");
  return detail::read_pfm_stream(file.get(), path);
}

/// Multiple PFM blocks concatenated in one file; used for latent-trajectory
/// dumps. Readable by splitting at each "PF"/"Pf" header.
inline void write_pfm_stack(const std::string& path, const std::vector<Image>& frames) {
  detail::FilePtr file = detail::open_file(path, "wb");
  for (const Image& img : frames) detail::write_pfm_frame(file.get(), img, path);
}

inline std::vector<Image> read_pfm_stack(const std::string& path) {
  detail::FilePtr file = detail::open_file(path, "rb");
  std::vector<Image> frames;
  for (;;) {
    const int ch = std::fgetc(file.get());
    if (ch == EOF) break;
    std::ungetc(ch, file.get());
    frames.push_back(detail::read_pfm_stream(file.get(), path));
  }
  if (frames.empty()) throw IoError("read_pfm_stack: no frames in '" + path + "'");
  return frames;
}

}  // namespace retex
