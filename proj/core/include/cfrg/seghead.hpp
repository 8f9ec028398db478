#pragma once

#include <array>
#include <memory>

#include "cfrg/backbones.hpp"
#include "cfrg/image.hpp"
#include "cfrg/nn.hpp"

namespace cfrg {

// Hint-weighted teacher features. in_t = (1 - w_d) * F_ta per level
// (channel-broadcast); in_s = (1 - w_r) * in_t, or in_t when the recovery
// hint is bypassed.
struct GuidedFeatures {
  std::vector<Tensor> in_t;
  std::vector<Tensor> in_s;
};

GuidedFeatures guide(const FeaturePyramid& teacher_features, const std::vector<Tensor>& w_d,
                     const std::vector<Tensor>& w_r, bool hint_enabled = true,
                     bool detach_hints = false);

struct SegOutput {
  Tensor logits;  // N1HW at the input resolution
  Tensor probs;
};

// Skip-connected decoder over the guided pyramid: the deepest level is
// upsampled stepwise, concatenating the matching shallower level at each
// step, then a 4x bilinear upsample and a 1x1 head emit full-resolution
// logits.
class SegmentationNet : public nn::Module {
 public:
  SegmentationNet(const std::array<int, 3>& in_channels, int width, RngStream& rng);

  SegOutput forward(const std::vector<Tensor>& in_s, int out_h, int out_w) const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

// Mean over all positions of -[G log S + (1-G) log(1-S)], probabilities
// clamped to [1e-7, 1-1e-7].
Tensor bce_loss(const Tensor& probs, const std::vector<Mask>& masks);

struct LossWeights {
  real lambda_dis = 1.0;
  real lambda_rec = 1.0;
  real lambda_bce = 1.0;
};

// L_all = lambda_dis * L_dis + lambda_rec * L_rec + lambda_bce * L_bce.
// Undefined tensors count as zero terms; a non-finite component aborts with
// diagnostics.
Tensor total_loss(const Tensor& l_dis, const Tensor& l_rec, const Tensor& l_bce,
                  const LossWeights& weights = {});

}  // namespace cfrg
