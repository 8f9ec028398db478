#include "cfrg/recovery.hpp"

namespace cfrg {

using nn::BatchNorm2d;
using nn::Conv2d;
using nn::ConvTranspose2d;

namespace {

class ResBlock : public nn::Module {
 public:
  ResBlock(int channels, RngStream& rng) {
    c1_ = std::make_shared<Conv2d>(channels, channels, 3, 1, 1, rng, /*bias=*/false);
    b1_ = std::make_shared<BatchNorm2d>(channels);
    c2_ = std::make_shared<Conv2d>(channels, channels, 3, 1, 1, rng, /*bias=*/false);
    b2_ = std::make_shared<BatchNorm2d>(channels);
    register_module("c1", c1_);
    register_module("b1", b1_);
    register_module("c2", c2_);
    register_module("b2", b2_);
  }

  Tensor forward(const Tensor& x) const {
    Tensor h = ops::relu(b1_->forward(c1_->forward(x)));
    h = b2_->forward(c2_->forward(h));
    return ops::relu(ops::add(h, x));
  }

 private:
  std::shared_ptr<Conv2d> c1_, c2_;
  std::shared_ptr<BatchNorm2d> b1_, b2_;
};

class DownBlock : public nn::Module {
 public:
  DownBlock(int cin, int cout, RngStream& rng) {
    conv_ = std::make_shared<Conv2d>(cin, cout, 3, 2, 1, rng, /*bias=*/false);
    bn_ = std::make_shared<BatchNorm2d>(cout);
    register_module("conv", conv_);
    register_module("bn", bn_);
  }
  Tensor forward(const Tensor& x) const { return ops::relu(bn_->forward(conv_->forward(x))); }

 private:
  std::shared_ptr<Conv2d> conv_;
  std::shared_ptr<BatchNorm2d> bn_;
};

class UpBlock : public nn::Module {
 public:
  UpBlock(int cin, int cout, RngStream& rng) {
    up_ = std::make_shared<ConvTranspose2d>(cin, cout, 2, 2, 0, rng, /*bias=*/false);
    bn_ = std::make_shared<BatchNorm2d>(cout);
    register_module("up", up_);
    register_module("bn", bn_);
  }
  Tensor forward(const Tensor& x) const { return ops::relu(bn_->forward(up_->forward(x))); }

 private:
  std::shared_ptr<ConvTranspose2d> up_;
  std::shared_ptr<BatchNorm2d> bn_;
};

}  // namespace

struct RecoveryNet::Impl {
  std::shared_ptr<DownBlock> down1a, down1b, down2;
  std::shared_ptr<Conv2d> fuse;
  std::shared_ptr<ResBlock> rb3, rb2, rb1;
  std::shared_ptr<UpBlock> up2, up1;
  std::shared_ptr<Conv2d> head3, head2, head1;  // linear emission heads
};

RecoveryNet::RecoveryNet(const std::array<int, 3>& ch, RngStream& rng) : impl_(new Impl) {
  impl_->down1a = std::make_shared<DownBlock>(ch[0], ch[1], rng);
  impl_->down1b = std::make_shared<DownBlock>(ch[1], ch[2], rng);
  impl_->down2 = std::make_shared<DownBlock>(ch[1], ch[2], rng);
  impl_->fuse = std::make_shared<Conv2d>(3 * ch[2], ch[2], 1, 1, 0, rng);
  impl_->rb3 = std::make_shared<ResBlock>(ch[2], rng);
  impl_->head3 = std::make_shared<Conv2d>(ch[2], ch[2], 3, 1, 1, rng);
  impl_->up2 = std::make_shared<UpBlock>(ch[2], ch[1], rng);
  impl_->rb2 = std::make_shared<ResBlock>(ch[1], rng);
  impl_->head2 = std::make_shared<Conv2d>(ch[1], ch[1], 3, 1, 1, rng);
  impl_->up1 = std::make_shared<UpBlock>(ch[1], ch[0], rng);
  impl_->rb1 = std::make_shared<ResBlock>(ch[0], rng);
  impl_->head1 = std::make_shared<Conv2d>(ch[0], ch[0], 3, 1, 1, rng);

  register_module("down1a", impl_->down1a);
  register_module("down1b", impl_->down1b);
  register_module("down2", impl_->down2);
  register_module("fuse", impl_->fuse);
  register_module("rb3", impl_->rb3);
  register_module("head3", impl_->head3);
  register_module("up2", impl_->up2);
  register_module("rb2", impl_->rb2);
  register_module("head2", impl_->head2);
  register_module("up1", impl_->up1);
  register_module("rb1", impl_->rb1);
  register_module("head1", impl_->head1);
}

FeaturePyramid RecoveryNet::forward(const FeaturePyramid& teacher_pyramid) const {
  CFRG_CHECK(teacher_pyramid.levels.size() == 3, "RecoveryNet expects K=3 levels");
  const Tensor& l1 = teacher_pyramid.levels[0];
  const Tensor& l2 = teacher_pyramid.levels[1];
  const Tensor& l3 = teacher_pyramid.levels[2];

  Tensor f1 = impl_->down1b->forward(impl_->down1a->forward(l1));
  Tensor f2 = impl_->down2->forward(l2);
  Tensor fused = impl_->fuse->forward(ops::concat_channels({f1, f2, l3}));

  Tensor h3 = impl_->rb3->forward(fused);
  Tensor out3 = impl_->head3->forward(h3);
  Tensor h2 = impl_->rb2->forward(impl_->up2->forward(h3));
  Tensor out2 = impl_->head2->forward(h2);
  Tensor h1 = impl_->rb1->forward(impl_->up1->forward(h2));
  Tensor out1 = impl_->head1->forward(h1);

  for (size_t i = 0; i < 3; ++i) {
    const Tensor& out = i == 0 ? out1 : (i == 1 ? out2 : out3);
    CFRG_CHECK(out.shape() == teacher_pyramid.levels[i].shape(),
               "recovery output level shape does not match the input pyramid");
  }

  FeaturePyramid result;
  result.levels = {out1, out2, out3};
  result.source = PyramidSource::recovery;
  result.source_ids = teacher_pyramid.source_ids;
  return result;
}

Tensor recovery_loss(const FeaturePyramid& recovered, const FeaturePyramid& teacher_on_clean) {
  CFRG_CHECK(recovered.levels.size() == 3 && teacher_on_clean.levels.size() == 3,
             "recovery_loss expects K=3 pyramids");
  if (!recovered.source_ids.empty() && !teacher_on_clean.source_ids.empty() &&
      recovered.source_ids != teacher_on_clean.source_ids)
    throw DataError("recovery_loss: mismatched pairing, pyramids come from different samples");
  Tensor total;
  for (size_t i = 0; i < 3; ++i) {
    Tensor dist = ops::rsub_scalar(
        1.0, ops::cosine_similarity_map(recovered.levels[i], teacher_on_clean.levels[i]));
    Tensor term = ops::mean_all(dist);
    total = total.defined() ? ops::add(total, term) : term;
  }
  return total;
}

std::vector<Tensor> recovery_weight(const FeaturePyramid& pyramid_in,
                                    const FeaturePyramid& recovered) {
  CFRG_CHECK(pyramid_in.levels.size() == 3 && recovered.levels.size() == 3,
             "recovery_weight expects K=3 pyramids");
  std::vector<Tensor> w;
  for (size_t i = 0; i < 3; ++i) {
    Tensor dist = ops::rsub_scalar(
        1.0, ops::cosine_similarity_map(pyramid_in.levels[i], recovered.levels[i]));
    w.push_back(ops::rsub_scalar(1.0, ops::clamp(dist, 0.0, 1.0)));
  }
  return w;
}

}  // namespace cfrg
