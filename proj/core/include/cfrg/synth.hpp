#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <vector>

#include "cfrg/dataset.hpp"
#include "cfrg/image.hpp"
#include "cfrg/rng.hpp"

namespace cfrg {

struct SynthConfig {
  // lattice periods sampled as powers of two in [perlin_period_min, perlin_period_max]
  int perlin_period_min = 1;
  int perlin_period_max = 64;
  real threshold = 0.5;  // on the min-max normalized field, strict >
  real blend_beta_min = 0.2;
  real blend_beta_max = 1.0;
  std::filesystem::path texture_root;
  real rotation_min_deg = -90.0;
  real rotation_max_deg = 90.0;
  real synth_probability = 0.5;
  bool foreground_only = false;

  void validate() const;
};

// Classic gradient-lattice noise: random unit gradients on a
// (period_y+1) x (period_x+1) lattice, quintic-faded bilinear interpolation
// of the corner dot products. Gradients drawn row-major from rng.
Map2D perlin_field(int height, int width, int period_y, int period_x, RngStream& rng);

// Thresholded (optionally rotated) field. Draw order from rng: period_y
// exponent, period_x exponent (each only when min<max), rotation angle (only
// when the range is non-degenerate), then lattice gradients.
Mask perlin_mask(int height, int width, const SynthConfig& config, RngStream& rng);

// x_a = (1-mask)*x_n + mask*(beta*texture + (1-beta)*x_n), clipped to [0,1].
// Pixels outside the mask are copied bit for bit.
Image blend_anomaly(const Image& x_n, const Image& texture, const Mask& mask, real beta);

struct SynthResult {
  Image image;  // x_a, or a copy of x_n on passthrough
  Mask mask;    // all zeros on passthrough
  bool was_corrupted = false;
};

// Directory of texture images used as the defect appearance source.
class TexturePool {
 public:
  explicit TexturePool(const std::filesystem::path& root);

  size_t size() const { return files_.size(); }
  // random texture resized to (height, width); memoized decode
  Image sample(int height, int width, RngStream& rng) const;

 private:
  std::vector<std::filesystem::path> files_;
  mutable std::map<size_t, Image> cache_;
  mutable std::mutex mutex_;
};

// Corrupts a normal sample with probability synth_probability. Pure function
// of (x_n, config, pool, rng); safe to call concurrently with independent
// rng streams.
SynthResult synthesize(const ImageSample& x_n, const SynthConfig& config, const TexturePool& pool,
                       RngStream& rng);

}  // namespace cfrg
