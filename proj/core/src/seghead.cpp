#include "cfrg/seghead.hpp"

#include <cmath>

#include "cfrg/distill.hpp"

namespace cfrg {

using nn::BatchNorm2d;
using nn::Conv2d;
using nn::ConvTranspose2d;

GuidedFeatures guide(const FeaturePyramid& teacher_features, const std::vector<Tensor>& w_d,
                     const std::vector<Tensor>& w_r, bool hint_enabled, bool detach_hints) {
  CFRG_CHECK(teacher_features.levels.size() == 3, "guide expects K=3 levels");
  CFRG_CHECK(w_d.size() == 3, "guide expects 3 distillation weight maps");
  if (hint_enabled) CFRG_CHECK(w_r.size() == 3, "guide expects 3 recovery weight maps");

  GuidedFeatures out;
  for (size_t i = 0; i < 3; ++i) {
    const Tensor& feat = teacher_features.levels[i];
    Tensor wd = detach_hints ? w_d[i].detach() : w_d[i];
    const auto& fs = feat.shape();
    const auto& ws = wd.shape();
    if (!(ws.size() == 4 && ws[0] == fs[0] && ws[1] == 1 && ws[2] == fs[2] && ws[3] == fs[3]))
      throw DataError("guide: weight map shape does not match features at level " +
                      std::to_string(i + 1));
    Tensor in_t = ops::mul_spatial(feat, ops::rsub_scalar(1.0, wd));
    Tensor in_s = in_t;
    if (hint_enabled) {
      Tensor wr = detach_hints ? w_r[i].detach() : w_r[i];
      if (wr.shape() != wd.shape())
        throw DataError("guide: recovery weight shape mismatch at level " + std::to_string(i + 1));
      in_s = ops::mul_spatial(in_t, ops::rsub_scalar(1.0, wr));
    }
    out.in_t.push_back(in_t);
    out.in_s.push_back(in_s);
  }
  return out;
}

namespace {

class ConvBlock : public nn::Module {
 public:
  ConvBlock(int cin, int cout, RngStream& rng) {
    c1_ = std::make_shared<Conv2d>(cin, cout, 3, 1, 1, rng, /*bias=*/false);
    b1_ = std::make_shared<BatchNorm2d>(cout);
    c2_ = std::make_shared<Conv2d>(cout, cout, 3, 1, 1, rng, /*bias=*/false);
    b2_ = std::make_shared<BatchNorm2d>(cout);
    register_module("c1", c1_);
    register_module("b1", b1_);
    register_module("c2", c2_);
    register_module("b2", b2_);
  }
  Tensor forward(const Tensor& x) const {
    Tensor h = ops::relu(b1_->forward(c1_->forward(x)));
    return ops::relu(b2_->forward(c2_->forward(h)));
  }

 private:
  std::shared_ptr<Conv2d> c1_, c2_;
  std::shared_ptr<BatchNorm2d> b1_, b2_;
};

}  // namespace

struct SegmentationNet::Impl {
  std::shared_ptr<ConvBlock> block3, block2, block1;
  std::shared_ptr<ConvTranspose2d> up32, up21;
  std::shared_ptr<Conv2d> head;
};

SegmentationNet::SegmentationNet(const std::array<int, 3>& in_ch, int width, RngStream& rng)
    : impl_(new Impl) {
  impl_->block3 = std::make_shared<ConvBlock>(in_ch[2], width, rng);
  impl_->up32 = std::make_shared<ConvTranspose2d>(width, width, 2, 2, 0, rng);
  impl_->block2 = std::make_shared<ConvBlock>(width + in_ch[1], width, rng);
  impl_->up21 = std::make_shared<ConvTranspose2d>(width, width, 2, 2, 0, rng);
  impl_->block1 = std::make_shared<ConvBlock>(width + in_ch[0], width, rng);
  impl_->head = std::make_shared<Conv2d>(width, 1, 1, 1, 0, rng);
  register_module("block3", impl_->block3);
  register_module("up32", impl_->up32);
  register_module("block2", impl_->block2);
  register_module("up21", impl_->up21);
  register_module("block1", impl_->block1);
  register_module("head", impl_->head);
}

SegOutput SegmentationNet::forward(const std::vector<Tensor>& in_s, int out_h, int out_w) const {
  CFRG_CHECK(in_s.size() == 3, "SegmentationNet expects K=3 guided levels");
  Tensor x = impl_->block3->forward(in_s[2]);
  x = impl_->up32->forward(x);
  x = impl_->block2->forward(ops::concat_channels({x, in_s[1]}));
  x = impl_->up21->forward(x);
  x = impl_->block1->forward(ops::concat_channels({x, in_s[0]}));
  x = ops::upsample_bilinear(x, out_h, out_w);
  SegOutput out;
  out.logits = impl_->head->forward(x);
  out.probs = ops::sigmoid(out.logits);
  return out;
}

Tensor bce_loss(const Tensor& probs, const std::vector<Mask>& masks) {
  const auto& s = probs.shape();
  CFRG_CHECK(s.size() == 4 && s[1] == 1, "bce_loss expects N1HW probabilities");
  CFRG_CHECK((int)masks.size() == s[0], "bce_loss: batch/mask count mismatch");
  std::vector<real> target = downsample_masks(masks, s[2], s[3]);
  return ops::bce_mean(probs, target, 1e-7);
}

Tensor total_loss(const Tensor& l_dis, const Tensor& l_rec, const Tensor& l_bce,
                  const LossWeights& weights) {
  auto check = [](const Tensor& t, const char* name) {
    if (t.defined() && !std::isfinite(t.item()))
      throw NumericError(std::string("total_loss: component ") + name +
                         " is not finite (value = " + std::to_string(t.item()) + ")");
  };
  check(l_dis, "L_dis");
  check(l_rec, "L_rec");
  check(l_bce, "L_bce");

  Tensor total;
  auto accumulate = [&total](const Tensor& t, real w) {
    if (!t.defined()) return;
    Tensor term = ops::scale(t, w);
    total = total.defined() ? ops::add(total, term) : term;
  };
  accumulate(l_dis, weights.lambda_dis);
  accumulate(l_rec, weights.lambda_rec);
  accumulate(l_bce, weights.lambda_bce);
  CFRG_CHECK(total.defined(), "total_loss: all components undefined");
  return total;
}

}  // namespace cfrg
