#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cfrg/common.hpp"

namespace cfrg {

// Dense H x W x C image, values in [0,1] unless a pipeline stage says
// otherwise (normalization produces out-of-range values on purpose).
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<real> data;  // row-major, channel-interleaved

  Image() = default;
  Image(int h, int w, int c, real fill = 0.0)
      : height(h), width(w), channels(c), data((size_t)h * w * c, fill) {}

  real& at(int y, int x, int c) { return data[((size_t)y * width + x) * channels + c]; }
  real at(int y, int x, int c) const { return data[((size_t)y * width + x) * channels + c]; }
  size_t numel() const { return data.size(); }
  bool empty() const { return data.empty(); }
};

// Binary H x W mask, values strictly in {0,1}.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<uint8_t> data;

  Mask() = default;
  Mask(int h, int w, uint8_t fill = 0) : height(h), width(w), data((size_t)h * w, fill) {}

  uint8_t& at(int y, int x) { return data[(size_t)y * width + x]; }
  uint8_t at(int y, int x) const { return data[(size_t)y * width + x]; }
  bool empty() const { return data.empty(); }
  size_t count_nonzero() const;
};

// Single-channel float map (score maps, noise fields).
struct Map2D {
  int height = 0;
  int width = 0;
  std::vector<real> data;

  Map2D() = default;
  Map2D(int h, int w, real fill = 0.0) : height(h), width(w), data((size_t)h * w, fill) {}

  real& at(int y, int x) { return data[(size_t)y * width + x]; }
  real at(int y, int x) const { return data[(size_t)y * width + x]; }
  bool empty() const { return data.empty(); }
};

// File I/O (PNG/JPEG/BMP). Decode failures surface the path.
Image read_image(const std::filesystem::path& path);
Mask read_mask(const std::filesystem::path& path);  // nonzero pixel = defect
void write_image(const std::filesystem::path& path, const Image& img);
void write_mask(const std::filesystem::path& path, const Mask& mask);
// 16-bit grayscale PNG; values scaled from [lo, hi] onto [0, 65535].
void write_heatmap_png16(const std::filesystem::path& path, const Map2D& map, real lo, real hi);

// Geometry kernels. Half-pixel-center convention for both interpolators.
Image resize_bilinear(const Image& src, int out_h, int out_w);
Mask resize_nearest(const Mask& src, int out_h, int out_w);
Map2D resize_bilinear(const Map2D& src, int out_h, int out_w);

// Rotation about the image center, bilinear sampling, zeros outside.
Map2D rotate(const Map2D& src, real degrees);

// Separable Gaussian blur, kernel radius ceil(4*sigma), reflect padding.
Map2D gaussian_blur(const Map2D& src, real sigma);

Image crop(const Image& src, int y0, int x0, int h, int w);
Mask crop(const Mask& src, int y0, int x0, int h, int w);

}  // namespace cfrg
