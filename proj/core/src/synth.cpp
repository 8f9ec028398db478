#include "cfrg/synth.hpp"

#include <algorithm>
#include <cmath>

namespace cfrg {

void SynthConfig::validate() const {
  auto pow2 = [](int v) { return v > 0 && (v & (v - 1)) == 0; };
  if (!pow2(perlin_period_min) || !pow2(perlin_period_max) ||
      perlin_period_min > perlin_period_max)
    throw ConfigError("synth perlin periods must be powers of two with min <= max");
  if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("synth.threshold must be in (0,1)");
  if (!(blend_beta_min > 0.0 && blend_beta_min <= blend_beta_max && blend_beta_max <= 1.0))
    throw ConfigError("synth blend range must satisfy 0 < min <= max <= 1");
  if (synth_probability < 0.0 || synth_probability > 1.0)
    throw ConfigError("synth.synth_probability must be in [0,1]");
  if (rotation_min_deg > rotation_max_deg) throw ConfigError("synth rotation range inverted");
}

Map2D perlin_field(int height, int width, int period_y, int period_x, RngStream& rng) {
  CFRG_CHECK(height >= 1 && width >= 1 && period_y >= 1 && period_x >= 1, "perlin_field: bad dims");
  // lattice gradients, row-major draw order
  std::vector<real> gx((size_t)(period_y + 1) * (period_x + 1));
  std::vector<real> gy(gx.size());
  for (int i = 0; i <= period_y; ++i)
    for (int j = 0; j <= period_x; ++j) {
      const real angle = rng.uniform(0.0, 2.0 * M_PI);
      gx[(size_t)i * (period_x + 1) + j] = std::cos(angle);
      gy[(size_t)i * (period_x + 1) + j] = std::sin(angle);
    }

  auto fade = [](real t) { return t * t * t * (t * (t * 6 - 15) + 10); };

  Map2D field(height, width);
  for (int y = 0; y < height; ++y) {
    const real u = (real)y * period_y / height;
    const int i0 = std::min((int)u, period_y - 1);
    const real du = u - i0;
    const real tu = fade(du);
    for (int x = 0; x < width; ++x) {
      const real v = (real)x * period_x / width;
      const int j0 = std::min((int)v, period_x - 1);
      const real dv = v - j0;
      const real tv = fade(dv);

      auto dot = [&](int i, int j, real oy, real ox) {
        const size_t k = (size_t)i * (period_x + 1) + j;
        return gy[k] * oy + gx[k] * ox;
      };
      const real n00 = dot(i0, j0, du, dv);
      const real n01 = dot(i0, j0 + 1, du, dv - 1);
      const real n10 = dot(i0 + 1, j0, du - 1, dv);
      const real n11 = dot(i0 + 1, j0 + 1, du - 1, dv - 1);
      const real a = n00 + tv * (n01 - n00);
      const real b = n10 + tv * (n11 - n10);
      field.at(y, x) = a + tu * (b - a);
    }
  }
  return field;
}

namespace {

int sample_period(const SynthConfig& cfg, RngStream& rng) {
  if (cfg.perlin_period_min == cfg.perlin_period_max) return cfg.perlin_period_min;
  const int lo = (int)std::round(std::log2((real)cfg.perlin_period_min));
  const int hi = (int)std::round(std::log2((real)cfg.perlin_period_max));
  return 1 << rng.uniform_int(lo, hi);
}

}  // namespace

Mask perlin_mask(int height, int width, const SynthConfig& config, RngStream& rng) {
  CFRG_CHECK(height >= 8 && width >= 8, "perlin_mask needs height, width >= 8");
  const int py = sample_period(config, rng);
  const int px = sample_period(config, rng);
  real angle = 0.0;
  if (config.rotation_min_deg < config.rotation_max_deg)
    angle = rng.uniform(config.rotation_min_deg, config.rotation_max_deg);

  Map2D field;
  if (angle == 0.0) {
    field = perlin_field(height, width, py, px, rng);
  } else {
    // draw on a padded square so the rotated crop has full support
    const int side = (int)std::ceil(std::hypot((real)height, (real)width));
    Map2D padded = perlin_field(side, side, py, px, rng);
    Map2D rotated = rotate(padded, angle);
    field = Map2D(height, width);
    const int oy = (side - height) / 2, ox = (side - width) / 2;
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) field.at(y, x) = rotated.at(oy + y, ox + x);
  }

  real lo = field.data[0], hi = field.data[0];
  for (real v : field.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const real span = hi > lo ? hi - lo : 1.0;

  Mask mask(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      mask.at(y, x) = ((field.at(y, x) - lo) / span > config.threshold) ? 1 : 0;
  return mask;
}

Image blend_anomaly(const Image& x_n, const Image& texture, const Mask& mask, real beta) {
  if (texture.height != x_n.height || texture.width != x_n.width ||
      texture.channels != x_n.channels || mask.height != x_n.height || mask.width != x_n.width)
    throw DataError("blend_anomaly: shape mismatch between image, texture and mask");
  Image out = x_n;  // unmasked pixels stay bit-identical
  for (int y = 0; y < x_n.height; ++y)
    for (int x = 0; x < x_n.width; ++x) {
      if (!mask.at(y, x)) continue;
      for (int c = 0; c < x_n.channels; ++c) {
        const real v = beta * texture.at(y, x, c) + (1.0 - beta) * x_n.at(y, x, c);
        out.at(y, x, c) = std::clamp(v, 0.0, 1.0);
      }
    }
  return out;
}

TexturePool::TexturePool(const std::filesystem::path& root) {
  if (root.empty() || !std::filesystem::exists(root))
    throw ConfigError("synth.texture_root does not exist: " + root.string());
  for (const auto& e : std::filesystem::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](char c) { return (char)std::tolower(c); });
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp")
      files_.push_back(e.path());
  }
  std::sort(files_.begin(), files_.end());
  if (files_.empty())
    throw ConfigError("synth.texture_root contains no texture images: " + root.string());
}

Image TexturePool::sample(int height, int width, RngStream& rng) const {
  const size_t idx = (size_t)rng.uniform_int(0, (int64_t)files_.size() - 1);
  Image tex;
  {
    std::lock_guard<std::mutex> lock(mutex_);
    auto it = cache_.find(idx);
    if (it == cache_.end()) it = cache_.emplace(idx, read_image(files_[idx])).first;
    tex = it->second;
  }
  if (tex.height == height && tex.width == width) return tex;
  return resize_bilinear(tex, height, width);
}

namespace {

// Brightness-based foreground estimate: pixels whose luminance departs from
// the median border luminance.
Mask estimate_foreground(const Image& img) {
  std::vector<real> border;
  auto lum = [&](int y, int x) {
    return 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
  };
  for (int x = 0; x < img.width; ++x) {
    border.push_back(lum(0, x));
    border.push_back(lum(img.height - 1, x));
  }
  for (int y = 0; y < img.height; ++y) {
    border.push_back(lum(y, 0));
    border.push_back(lum(y, img.width - 1));
  }
  std::nth_element(border.begin(), border.begin() + border.size() / 2, border.end());
  const real bg = border[border.size() / 2];
  Mask fg(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) fg.at(y, x) = std::abs(lum(y, x) - bg) > 0.05 ? 1 : 0;
  return fg;
}

}  // namespace

SynthResult synthesize(const ImageSample& x_n, const SynthConfig& config, const TexturePool& pool,
                       RngStream& rng) {
  CFRG_CHECK(x_n.label == Label::normal, "synthesize expects a normal training sample");
  config.validate();
  SynthResult result;
  result.mask = Mask(x_n.image.height, x_n.image.width, 0);

  if (!rng.bernoulli(config.synth_probability)) {
    result.image = x_n.image;
    result.was_corrupted = false;
    return result;
  }

  Mask mask = perlin_mask(x_n.image.height, x_n.image.width, config, rng);
  if (config.foreground_only) {
    const Mask fg = estimate_foreground(x_n.image);
    for (size_t i = 0; i < mask.data.size(); ++i) mask.data[i] &= fg.data[i];
  }
  if (mask.count_nonzero() == 0) {  // nothing left to corrupt
    result.image = x_n.image;
    result.was_corrupted = false;
    return result;
  }

  const Image texture = pool.sample(x_n.image.height, x_n.image.width, rng);
  const real beta = rng.uniform(config.blend_beta_min, config.blend_beta_max);
  result.image = blend_anomaly(x_n.image, texture, mask, beta);
  result.mask = std::move(mask);
  result.was_corrupted = true;
  return result;
}

}  // namespace cfrg
