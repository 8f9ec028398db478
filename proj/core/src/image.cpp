#include "cfrg/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace cfrg {

size_t Mask::count_nonzero() const {
  size_t n = 0;
  for (uint8_t v : data) n += (v != 0);
  return n;
}

Image read_image(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) throw DataError("failed to decode image: " + path.string());
  Image img(m.rows, m.cols, 3);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < m.cols; ++x) {
      // OpenCV loads BGR
      img.at(y, x, 0) = row[x][2] / 255.0;
      img.at(y, x, 1) = row[x][1] / 255.0;
      img.at(y, x, 2) = row[x][0] / 255.0;
    }
  }
  return img;
}

Mask read_mask(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw DataError("failed to decode mask: " + path.string());
  Mask mask(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) mask.at(y, x) = row[x] != 0 ? 1 : 0;
  }
  return mask;
}

void write_image(const std::filesystem::path& path, const Image& img) {
  CFRG_CHECK(img.channels == 3 || img.channels == 1, "write_image expects 1 or 3 channels");
  cv::Mat m(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        real v = img.at(y, x, img.channels == 3 ? c : 0);
        row[x][2 - c] = (uint8_t)std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
      }
    }
  }
  if (!cv::imwrite(path.string(), m)) throw DataError("failed to write image: " + path.string());
}

void write_mask(const std::filesystem::path& path, const Mask& mask) {
  cv::Mat m(mask.height, mask.width, CV_8UC1);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) m.at<uint8_t>(y, x) = mask.at(y, x) ? 255 : 0;
  if (!cv::imwrite(path.string(), m)) throw DataError("failed to write mask: " + path.string());
}

void write_heatmap_png16(const std::filesystem::path& path, const Map2D& map, real lo, real hi) {
  cv::Mat m(map.height, map.width, CV_16UC1);
  const real span = hi > lo ? hi - lo : 1.0;
  for (int y = 0; y < map.height; ++y)
    for (int x = 0; x < map.width; ++x) {
      real v = std::clamp((map.at(y, x) - lo) / span, 0.0, 1.0);
      m.at<uint16_t>(y, x) = (uint16_t)std::lround(v * 65535.0);
    }
  if (!cv::imwrite(path.string(), m)) throw DataError("failed to write heatmap: " + path.string());
}

namespace {

// Shared bilinear sampler, half-pixel centers, edge clamped.
template <typename GetFn>
real sample_bilinear(GetFn get, int h, int w, real sy, real sx) {
  real fy = std::clamp(sy, 0.0, (real)(h - 1));
  real fx = std::clamp(sx, 0.0, (real)(w - 1));
  int y0 = (int)std::floor(fy), x0 = (int)std::floor(fx);
  int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  real wy = fy - y0, wx = fx - x0;
  return get(y0, x0) * (1 - wy) * (1 - wx) + get(y0, x1) * (1 - wy) * wx +
         get(y1, x0) * wy * (1 - wx) + get(y1, x1) * wy * wx;
}

}  // namespace

Image resize_bilinear(const Image& src, int out_h, int out_w) {
  CFRG_CHECK(!src.empty() && out_h > 0 && out_w > 0, "resize_bilinear: bad shapes");
  Image dst(out_h, out_w, src.channels);
  const real sy = (real)src.height / out_h, sx = (real)src.width / out_w;
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x)
      for (int c = 0; c < src.channels; ++c)
        dst.at(y, x, c) = sample_bilinear([&](int yy, int xx) { return src.at(yy, xx, c); },
                                          src.height, src.width, (y + 0.5) * sy - 0.5,
                                          (x + 0.5) * sx - 0.5);
  return dst;
}

Map2D resize_bilinear(const Map2D& src, int out_h, int out_w) {
  CFRG_CHECK(!src.empty() && out_h > 0 && out_w > 0, "resize_bilinear: bad shapes");
  Map2D dst(out_h, out_w);
  const real sy = (real)src.height / out_h, sx = (real)src.width / out_w;
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x)
      dst.at(y, x) = sample_bilinear([&](int yy, int xx) { return src.at(yy, xx); }, src.height,
                                     src.width, (y + 0.5) * sy - 0.5, (x + 0.5) * sx - 0.5);
  return dst;
}

Mask resize_nearest(const Mask& src, int out_h, int out_w) {
  CFRG_CHECK(!src.empty() && out_h > 0 && out_w > 0, "resize_nearest: bad shapes");
  Mask dst(out_h, out_w);
  const real sy = (real)src.height / out_h, sx = (real)src.width / out_w;
  for (int y = 0; y < out_h; ++y) {
    int yy = std::min((int)std::floor((y + 0.5) * sy), src.height - 1);
    for (int x = 0; x < out_w; ++x) {
      int xx = std::min((int)std::floor((x + 0.5) * sx), src.width - 1);
      dst.at(y, x) = src.at(yy, xx) ? 1 : 0;  // re-binarize
    }
  }
  return dst;
}

Map2D rotate(const Map2D& src, real degrees) {
  Map2D dst(src.height, src.width);
  const real rad = degrees * M_PI / 180.0;
  const real cs = std::cos(rad), sn = std::sin(rad);
  const real cy = (src.height - 1) / 2.0, cx = (src.width - 1) / 2.0;
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x) {
      // inverse map: rotate destination coords back into the source
      real dy = y - cy, dx = x - cx;
      real sy = cs * dy + sn * dx + cy;
      real sx = -sn * dy + cs * dx + cx;
      if (sy < -0.5 || sy > src.height - 0.5 || sx < -0.5 || sx > src.width - 0.5) continue;
      dst.at(y, x) = sample_bilinear([&](int yy, int xx) { return src.at(yy, xx); }, src.height,
                                     src.width, sy, sx);
    }
  return dst;
}

Map2D gaussian_blur(const Map2D& src, real sigma) {
  if (sigma <= 0) return src;
  const int radius = (int)std::ceil(4.0 * sigma);
  std::vector<real> kernel(2 * radius + 1);
  real sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (real)i * i / (sigma * sigma));
    sum += kernel[i + radius];
  }
  for (real& k : kernel) k /= sum;

  auto reflect = [](int i, int n) {
    while (i < 0 || i >= n) {
      if (i < 0) i = -i - 1;
      if (i >= n) i = 2 * n - 1 - i;
    }
    return i;
  };

  Map2D tmp(src.height, src.width), dst(src.height, src.width);
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x) {
      real acc = 0;
      for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * src.at(y, reflect(x + k, src.width));
      tmp.at(y, x) = acc;
    }
  for (int y = 0; y < src.height; ++y)
    for (int x = 0; x < src.width; ++x) {
      real acc = 0;
      for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * tmp.at(reflect(y + k, src.height), x);
      dst.at(y, x) = acc;
    }
  return dst;
}

Image crop(const Image& src, int y0, int x0, int h, int w) {
  CFRG_CHECK(y0 >= 0 && x0 >= 0 && y0 + h <= src.height && x0 + w <= src.width, "crop out of bounds");
  Image dst(h, w, src.channels);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < src.channels; ++c) dst.at(y, x, c) = src.at(y0 + y, x0 + x, c);
  return dst;
}

Mask crop(const Mask& src, int y0, int x0, int h, int w) {
  CFRG_CHECK(y0 >= 0 && x0 >= 0 && y0 + h <= src.height && x0 + w <= src.width, "crop out of bounds");
  Mask dst(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) dst.at(y, x) = src.at(y0 + y, x0 + x);
  return dst;
}

}  // namespace cfrg
