#pragma once

#include <array>
#include <memory>

#include "cfrg/backbones.hpp"
#include "cfrg/nn.hpp"

namespace cfrg {

// Feature-space recovery branch: fuses the teacher pyramid down to the
// deepest level (stride convolutions + 1x1 fusion), then decodes back up
// through residual stages with transposed-convolution upsampling, emitting a
// pyramid that matches the teacher's level shapes.
class RecoveryNet : public nn::Module {
 public:
  RecoveryNet(const std::array<int, 3>& channels, RngStream& rng);

  FeaturePyramid forward(const FeaturePyramid& teacher_pyramid) const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

// L_rec = sum over levels of mean(1 - cos(F_r, F_tn)). The recovered pyramid
// must be paired with the teacher pyramid of the matching clean image.
Tensor recovery_loss(const FeaturePyramid& recovered, const FeaturePyramid& teacher_on_clean);

// w_r per level: 1 - clamp(1 - cos(input, recovered), 0, 1). The hint
// 1 - w_r is high where recovery changed the feature direction.
std::vector<Tensor> recovery_weight(const FeaturePyramid& pyramid_in,
                                    const FeaturePyramid& recovered);

}  // namespace cfrg
