#include "cfrg/infer.hpp"

#include <algorithm>

#include "cfrg/ops.hpp"

namespace cfrg {

Map2D recovery_similarity_map(const FeaturePyramid& teacher_features,
                              const FeaturePyramid& recovered, int out_h, int out_w) {
  CFRG_CHECK(teacher_features.levels.size() == 3 && recovered.levels.size() == 3,
             "recovery_similarity_map expects K=3 pyramids");
  CFRG_CHECK(teacher_features.levels[0].dim(0) == 1, "recovery_similarity_map runs per image");
  NoGradGuard guard;
  Map2D acc(out_h, out_w, 0.0);
  for (size_t i = 0; i < 3; ++i) {
    Tensor dist = ops::rsub_scalar(
        1.0, ops::cosine_similarity_map(teacher_features.levels[i], recovered.levels[i]));
    const auto& s = dist.shape();
    Map2D level(s[2], s[3]);
    std::copy(dist.data().begin(), dist.data().end(), level.data.begin());
    Map2D up = (s[2] == out_h && s[3] == out_w) ? level : resize_bilinear(level, out_h, out_w);
    for (size_t p = 0; p < acc.data.size(); ++p) acc.data[p] += up.data[p];
  }
  for (real& v : acc.data) v /= 3.0;
  return acc;
}

AnomalyScoreMap fuse_and_smooth(const Map2D& rec_map, const Map2D& seg_probs,
                                const FuseOptions& opts) {
  CFRG_CHECK(rec_map.height == seg_probs.height && rec_map.width == seg_probs.width,
             "fuse_and_smooth: shape mismatch");
  Map2D fused(rec_map.height, rec_map.width);
  for (size_t i = 0; i < fused.data.size(); ++i) fused.data[i] = rec_map.data[i] + seg_probs.data[i];

  AnomalyScoreMap out;
  out.pixel_scores = gaussian_blur(fused, opts.sigma);

  if (opts.score_mode == ImageScoreMode::max) {
    out.image_score = *std::max_element(out.pixel_scores.data.begin(), out.pixel_scores.data.end());
  } else {
    std::vector<real> vals = out.pixel_scores.data;
    const size_t k = std::min(vals.size(), (size_t)std::max(1, opts.top_k));
    std::partial_sort(vals.begin(), vals.begin() + (std::ptrdiff_t)k, vals.end(),
                      std::greater<real>());
    real acc = 0;
    for (size_t i = 0; i < k; ++i) acc += vals[i];
    out.image_score = acc / (real)k;
  }
  return out;
}

}  // namespace cfrg
