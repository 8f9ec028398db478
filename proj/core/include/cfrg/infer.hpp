#pragma once

#include "cfrg/backbones.hpp"
#include "cfrg/image.hpp"

namespace cfrg {

struct AnomalyScoreMap {
  Map2D pixel_scores;  // input resolution, nonnegative
  real image_score = 0;
};

// Per level 1 - cos between the two pyramids, bilinearly upsampled to
// (out_h, out_w), averaged over the K=3 levels. Batch size must be 1.
Map2D recovery_similarity_map(const FeaturePyramid& teacher_features,
                              const FeaturePyramid& recovered, int out_h, int out_w);

enum class ImageScoreMode { max, topk_mean };

struct FuseOptions {
  real sigma = 4.0;
  ImageScoreMode score_mode = ImageScoreMode::max;
  int top_k = 100;
};

// pixel_scores = gaussian_blur(rec_map + segmentation probabilities);
// image_score = max (or mean of the top-k pixels).
AnomalyScoreMap fuse_and_smooth(const Map2D& rec_map, const Map2D& seg_probs,
                                const FuseOptions& opts = {});

}  // namespace cfrg
