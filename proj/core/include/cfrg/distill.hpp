#pragma once

#include <vector>

#include "cfrg/backbones.hpp"
#include "cfrg/image.hpp"

namespace cfrg {

// Per-level 1 - cosine similarity maps, shape N1HW, values in [0, 2].
struct CosineDistanceMap {
  std::vector<Tensor> levels;
};

CosineDistanceMap cosine_distance(const FeaturePyramid& a, const FeaturePyramid& b);

struct DistillLossOptions {
  bool push_enabled = true;
  // clamp D to [0,1] inside the push term only; the raw push incentive is
  // unbounded below (D can reach 2)
  bool clamp_push = true;
};

// Eq. of the push-pull objective: per level, mean over pixels of
// (1-G) * D + G * (1 - D), summed over the three levels. G is downsampled
// per level with nearest-neighbor so it stays binary. With push disabled the
// G-term is dropped and the mean runs over normal pixels only.
Tensor distill_loss(const CosineDistanceMap& distances, const std::vector<Mask>& masks,
                    const DistillLossOptions& opts = {});

// w_d per level: 1 - clamp(D, 0, 1). Stays on the tape; callers detach when
// hint gradients are unwanted.
std::vector<Tensor> distill_weight(const CosineDistanceMap& distances);

// Nearest-neighbor downsample of a batch of masks to (h, w), flattened as a
// {0,1} selector aligned with an N1HW tensor.
std::vector<real> downsample_masks(const std::vector<Mask>& masks, int h, int w);

}  // namespace cfrg
