#include "cfrg/distill.hpp"

#include <cstdio>

namespace cfrg {

CosineDistanceMap cosine_distance(const FeaturePyramid& a, const FeaturePyramid& b) {
  CFRG_CHECK(a.levels.size() == 3 && b.levels.size() == 3, "cosine_distance expects K=3 pyramids");
  CosineDistanceMap out;
  for (size_t i = 0; i < 3; ++i) {
    if (a.levels[i].shape() != b.levels[i].shape())
      throw DataError("cosine_distance: pyramids are not level-shape aligned at level " +
                      std::to_string(i + 1));
    out.levels.push_back(ops::rsub_scalar(1.0, ops::cosine_similarity_map(a.levels[i], b.levels[i])));
  }
  return out;
}

std::vector<real> downsample_masks(const std::vector<Mask>& masks, int h, int w) {
  std::vector<real> sel;
  sel.reserve(masks.size() * (size_t)h * w);
  for (const Mask& m : masks) {
    if (m.empty()) {
      sel.insert(sel.end(), (size_t)h * w, 0.0);
      continue;
    }
    const Mask small = (m.height == h && m.width == w) ? m : resize_nearest(m, h, w);
    for (uint8_t v : small.data) sel.push_back(v ? 1.0 : 0.0);
  }
  return sel;
}

Tensor distill_loss(const CosineDistanceMap& distances, const std::vector<Mask>& masks,
                    const DistillLossOptions& opts) {
  CFRG_CHECK(distances.levels.size() == 3, "distill_loss expects K=3 levels");
  Tensor total;
  static bool warned_all_anomalous = false;
  for (const Tensor& d : distances.levels) {
    const auto& s = d.shape();
    CFRG_CHECK((int)masks.size() == s[0], "distill_loss: batch/mask count mismatch");
    std::vector<real> g = downsample_masks(masks, s[2], s[3]);

    Tensor level_term;
    if (opts.push_enabled) {
      std::vector<real> g_inv(g.size());
      for (size_t i = 0; i < g.size(); ++i) g_inv[i] = 1.0 - g[i];
      Tensor pull = ops::mul(d, Tensor::from_data(s, g_inv));
      Tensor push_base = opts.clamp_push ? ops::clamp(d, 0.0, 1.0) : d;
      Tensor push = ops::mul(ops::rsub_scalar(1.0, push_base), Tensor::from_data(s, g));
      level_term = ops::mean_all(ops::add(pull, push));
    } else {
      // normal pixels only
      std::vector<real> g_inv(g.size());
      real normal_count = 0;
      for (size_t i = 0; i < g.size(); ++i) {
        g_inv[i] = 1.0 - g[i];
        normal_count += g_inv[i];
      }
      if (normal_count == 0 && !warned_all_anomalous) {
        std::fprintf(stderr,
                     "[distill] warning: no normal pixels at a level with push disabled; "
                     "loss term is zero by convention\n");
        warned_all_anomalous = true;
      }
      level_term = ops::masked_mean(d, g_inv);
    }
    total = total.defined() ? ops::add(total, level_term) : level_term;
  }
  return total;
}

std::vector<Tensor> distill_weight(const CosineDistanceMap& distances) {
  std::vector<Tensor> w;
  for (const Tensor& d : distances.levels) w.push_back(ops::rsub_scalar(1.0, ops::clamp(d, 0.0, 1.0)));
  return w;
}

}  // namespace cfrg
