#include "cfrg/toydata.hpp"

#include <cmath>

#include "cfrg/image.hpp"
#include "cfrg/rng.hpp"

namespace cfrg {

namespace fs = std::filesystem;

namespace {

// One product, slight capture jitter: the shading pattern is fixed per
// category; images differ by small brightness shifts and sensor grain.
Image normal_plate(int size, real base_phase, RngStream& rng) {
  const real phase = base_phase + rng.uniform(-0.1, 0.1);
  const real tilt = rng.uniform(-0.01, 0.01);
  Image img(size, size, 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const real fy = (real)y / size, fx = (real)x / size;
      real v = 0.35 + 0.22 * fy + tilt + 0.06 * std::sin(2.0 * M_PI * 3.0 * fx + phase);
      v += rng.uniform(-0.01, 0.01);  // sensor-ish grain
      img.at(y, x, 0) = std::clamp(v, 0.0, 1.0);
      img.at(y, x, 1) = std::clamp(v * 0.96, 0.0, 1.0);
      img.at(y, x, 2) = std::clamp(v * 0.90, 0.0, 1.0);
    }
  return img;
}

void plant_defects(Image& img, Mask& mask, RngStream& rng) {
  const int n_defects = (int)rng.uniform_int(1, 2);
  for (int d = 0; d < n_defects; ++d) {
    const bool ellipse = rng.bernoulli(0.5);
    const bool bright = rng.bernoulli(0.5);
    const real level = bright ? rng.uniform(0.88, 0.98) : rng.uniform(0.02, 0.12);
    const int ry = (int)rng.uniform_int(4, 9);
    const int rx = (int)rng.uniform_int(4, 9);
    const int cy = (int)rng.uniform_int(ry + 2, img.height - ry - 3);
    const int cx = (int)rng.uniform_int(rx + 2, img.width - rx - 3);
    for (int y = cy - ry; y <= cy + ry; ++y)
      for (int x = cx - rx; x <= cx + rx; ++x) {
        if (ellipse) {
          const real dy = (real)(y - cy) / ry, dx = (real)(x - cx) / rx;
          if (dy * dy + dx * dx > 1.0) continue;
        }
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = level;
        mask.at(y, x) = 1;
      }
  }
}

std::string zero_pad(int v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", v);
  return buf;
}

}  // namespace

void make_mini_dataset(const fs::path& root, const ToyDatasetSpec& spec) {
  const fs::path cat = root / spec.category;
  fs::create_directories(cat / "train" / "good");
  fs::create_directories(cat / "test" / "good");
  fs::create_directories(cat / "test" / spec.defect_type);
  fs::create_directories(cat / "ground_truth" / spec.defect_type);

  for (int i = 0; i < spec.n_train; ++i) {
    RngStream rng(derive_seed(spec.seed, tag_hash("train"), (uint64_t)i));
    write_image(cat / "train" / "good" / (zero_pad(i) + ".png"), normal_plate(spec.image_size, rng));
  }
  for (int i = 0; i < spec.n_test_good; ++i) {
    RngStream rng(derive_seed(spec.seed, tag_hash("test-good"), (uint64_t)i));
    write_image(cat / "test" / "good" / (zero_pad(i) + ".png"), normal_plate(spec.image_size, rng));
  }
  for (int i = 0; i < spec.n_test_defect; ++i) {
    RngStream rng(derive_seed(spec.seed, tag_hash("test-defect"), (uint64_t)i));
    Image img = normal_plate(spec.image_size, rng);
    Mask mask(spec.image_size, spec.image_size, 0);
    plant_defects(img, mask, rng);
    write_image(cat / "test" / spec.defect_type / (zero_pad(i) + ".png"), img);
    write_mask(cat / "ground_truth" / spec.defect_type / (zero_pad(i) + "_mask.png"), mask);
  }
}

void make_texture_dir(const fs::path& dir, int count, int size, uint64_t seed) {
  fs::create_directories(dir);
  for (int i = 0; i < count; ++i) {
    RngStream rng(derive_seed(seed, tag_hash("texture"), (uint64_t)i));
    Image tex(size, size, 3);
    const int kind = i % 3;
    if (kind == 0) {  // stripes
      const int period = (int)rng.uniform_int(4, 10);
      const bool horizontal = rng.bernoulli(0.5);
      const real a = rng.uniform(0.0, 0.15), b = rng.uniform(0.85, 1.0);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const int t = horizontal ? y : x;
          const real v = (t / period) % 2 == 0 ? a : b;
          for (int c = 0; c < 3; ++c) tex.at(y, x, c) = v;
        }
    } else if (kind == 1) {  // checkers
      const int cell = (int)rng.uniform_int(4, 12);
      const real a = rng.uniform(0.0, 0.2), b = rng.uniform(0.8, 1.0);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const real v = ((y / cell) + (x / cell)) % 2 == 0 ? a : b;
          for (int c = 0; c < 3; ++c) tex.at(y, x, c) = v;
        }
    } else {  // coarse binary noise
      const int cell = (int)rng.uniform_int(2, 6);
      const int cells = (size + cell - 1) / cell;
      std::vector<real> vals((size_t)cells * cells);
      for (real& v : vals) v = rng.bernoulli(0.5) ? rng.uniform(0.0, 0.15) : rng.uniform(0.85, 1.0);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const real v = vals[(size_t)(y / cell) * cells + (size_t)(x / cell)];
          for (int c = 0; c < 3; ++c) tex.at(y, x, c) = v;
        }
    }
    write_image(dir / ("tex_" + std::to_string(i) + ".png"), tex);
  }
}

}  // namespace cfrg
