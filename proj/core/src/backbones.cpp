#include "cfrg/backbones.hpp"

#include <algorithm>

#include "cfrg/tensorfile.hpp"

namespace cfrg {

using nn::BatchNorm2d;
using nn::Conv2d;
using nn::Module;

Tensor to_input_tensor(const std::vector<Image>& batch, const ImageStats& stats) {
  CFRG_CHECK(!batch.empty(), "to_input_tensor: empty batch");
  const int h = batch[0].height, w = batch[0].width;
  for (const auto& img : batch)
    CFRG_CHECK(img.height == h && img.width == w && img.channels == 3,
               "to_input_tensor: ragged batch");
  Tensor t = Tensor::zeros({(int)batch.size(), 3, h, w});
  for (size_t n = 0; n < batch.size(); ++n)
    for (int c = 0; c < 3; ++c) {
      real* dst = t.data().data() + offset4(t.shape(), (int)n, c, 0, 0);
      const Image& img = batch[n];
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          dst[(int64_t)y * w + x] = (img.at(y, x, c) - stats.mean[(size_t)c]) / stats.stddev[(size_t)c];
    }
  return t;
}

namespace {

class ConvBnAct : public Module {
 public:
  enum class Act { none, relu, silu };

  ConvBnAct(int cin, int cout, int k, int stride, RngStream& rng, Act act, int groups = 1,
            bool with_bn = true)
      : act_(act) {
    conv_ = std::make_shared<Conv2d>(cin, cout, k, stride, k / 2, rng, /*bias=*/!with_bn, groups);
    register_module("conv", conv_);
    if (with_bn) {
      bn_ = std::make_shared<BatchNorm2d>(cout);
      register_module("bn", bn_);
    }
  }

  Tensor forward(const Tensor& x) const {
    Tensor y = conv_->forward(x);
    if (bn_) y = bn_->forward(y);
    switch (act_) {
      case Act::relu: return ops::relu(y);
      case Act::silu: return ops::silu(y);
      default: return y;
    }
  }

 private:
  std::shared_ptr<Conv2d> conv_;
  std::shared_ptr<BatchNorm2d> bn_;
  Act act_;
};

// ---------------------------------------------------------------- tiny nets

// Desk-scale stand-in with the stride-4/8/16 level contract. Plain conv
// stages, signed (pre-activation) level outputs.
class TinyBackboneA : public Backbone {
 public:
  explicit TinyBackboneA(RngStream& rng) {
    stem_ = std::make_shared<Conv2d>(3, 16, 3, 2, 1, rng);
    s1_ = std::make_shared<Conv2d>(16, 16, 3, 2, 1, rng);
    s2_ = std::make_shared<Conv2d>(16, 32, 3, 2, 1, rng);
    s3_ = std::make_shared<Conv2d>(32, 64, 3, 2, 1, rng);
    register_module("stem", stem_);
    register_module("s1", s1_);
    register_module("s2", s2_);
    register_module("s3", s3_);
  }

  std::vector<Tensor> forward_levels(const Tensor& x) const override {
    Tensor h = ops::relu(stem_->forward(x));
    Tensor l1 = s1_->forward(h);
    Tensor l2 = s2_->forward(ops::relu(l1));
    Tensor l3 = s3_->forward(ops::relu(l2));
    return {l1, l2, l3};
  }
  std::array<int, 3> level_channels() const override { return {16, 32, 64}; }

 private:
  std::shared_ptr<Conv2d> stem_, s1_, s2_, s3_;
};

// Slimmer heterogeneous partner for TinyBackboneA: deeper stages, narrower
// channels, batch-normalized.
class TinyBackboneB : public Backbone {
 public:
  explicit TinyBackboneB(RngStream& rng) {
    stem_ = std::make_shared<ConvBnAct>(3, 8, 3, 2, rng, ConvBnAct::Act::relu);
    s1a_ = std::make_shared<ConvBnAct>(8, 8, 3, 2, rng, ConvBnAct::Act::relu);
    s1b_ = std::make_shared<ConvBnAct>(8, 8, 3, 1, rng, ConvBnAct::Act::relu);
    s2a_ = std::make_shared<ConvBnAct>(8, 14, 3, 2, rng, ConvBnAct::Act::relu);
    s2b_ = std::make_shared<ConvBnAct>(14, 14, 3, 1, rng, ConvBnAct::Act::relu);
    s3a_ = std::make_shared<ConvBnAct>(14, 28, 3, 2, rng, ConvBnAct::Act::relu);
    s3b_ = std::make_shared<ConvBnAct>(28, 28, 3, 1, rng, ConvBnAct::Act::relu);
    register_module("stem", stem_);
    register_module("s1a", s1a_);
    register_module("s1b", s1b_);
    register_module("s2a", s2a_);
    register_module("s2b", s2b_);
    register_module("s3a", s3a_);
    register_module("s3b", s3b_);
  }

  std::vector<Tensor> forward_levels(const Tensor& x) const override {
    Tensor h = stem_->forward(x);
    Tensor l1 = s1b_->forward(s1a_->forward(h));
    Tensor l2 = s2b_->forward(s2a_->forward(l1));
    Tensor l3 = s3b_->forward(s3a_->forward(l2));
    return {l1, l2, l3};
  }
  std::array<int, 3> level_channels() const override { return {8, 14, 28}; }

 private:
  std::shared_ptr<ConvBnAct> stem_, s1a_, s1b_, s2a_, s2b_, s3a_, s3b_;
};

// ------------------------------------------------------------ wide resnet 50

class Bottleneck : public Module {
 public:
  Bottleneck(int cin, int width, int cout, int stride, RngStream& rng) {
    c1_ = std::make_shared<ConvBnAct>(cin, width, 1, 1, rng, ConvBnAct::Act::relu);
    c2_ = std::make_shared<ConvBnAct>(width, width, 3, stride, rng, ConvBnAct::Act::relu);
    c3_ = std::make_shared<ConvBnAct>(width, cout, 1, 1, rng, ConvBnAct::Act::none);
    register_module("c1", c1_);
    register_module("c2", c2_);
    register_module("c3", c3_);
    if (stride != 1 || cin != cout) {
      down_ = std::make_shared<ConvBnAct>(cin, cout, 1, stride, rng, ConvBnAct::Act::none);
      register_module("down", down_);
    }
  }

  Tensor forward(const Tensor& x) const {
    Tensor y = c3_->forward(c2_->forward(c1_->forward(x)));
    Tensor skip = down_ ? down_->forward(x) : x;
    return ops::relu(ops::add(y, skip));
  }

 private:
  std::shared_ptr<ConvBnAct> c1_, c2_, c3_, down_;
};

// First three stages of wide_resnet50_2 (width multiplier 2, expansion 4);
// level channels 256/512/1024 at strides 4/8/16.
class WideResNet50 : public Backbone {
 public:
  explicit WideResNet50(RngStream& rng) {
    stem_ = std::make_shared<ConvBnAct>(3, 64, 7, 2, rng, ConvBnAct::Act::relu);
    register_module("stem", stem_);
    make_layer("layer1", 64, 128, 256, 3, 1, rng);
    make_layer("layer2", 256, 256, 512, 4, 2, rng);
    make_layer("layer3", 512, 512, 1024, 6, 2, rng);
  }

  std::vector<Tensor> forward_levels(const Tensor& x) const override {
    Tensor h = stem_->forward(x);
    h = ops::max_pool2d(h, 3, 2, 1);
    Tensor l1, l2, l3;
    for (const auto& b : layer1_) h = b->forward(h);
    l1 = h;
    for (const auto& b : layer2_) h = b->forward(h);
    l2 = h;
    for (const auto& b : layer3_) h = b->forward(h);
    l3 = h;
    return {l1, l2, l3};
  }
  std::array<int, 3> level_channels() const override { return {256, 512, 1024}; }

 private:
  void make_layer(const std::string& name, int cin, int width, int cout, int blocks, int stride,
                  RngStream& rng) {
    auto& dst = name == "layer1" ? layer1_ : (name == "layer2" ? layer2_ : layer3_);
    for (int i = 0; i < blocks; ++i) {
      auto blk = std::make_shared<Bottleneck>(i == 0 ? cin : cout, width, cout,
                                              i == 0 ? stride : 1, rng);
      register_module(name + "." + std::to_string(i), blk);
      dst.push_back(blk);
    }
  }

  std::shared_ptr<ConvBnAct> stem_;
  std::vector<std::shared_ptr<Bottleneck>> layer1_, layer2_, layer3_;
};

// ---------------------------------------------------------- efficientnet b0

class SqueezeExcite : public Module {
 public:
  SqueezeExcite(int channels, int se_channels, RngStream& rng) {
    reduce_ = std::make_shared<Conv2d>(channels, se_channels, 1, 1, 0, rng);
    expand_ = std::make_shared<Conv2d>(se_channels, channels, 1, 1, 0, rng);
    register_module("reduce", reduce_);
    register_module("expand", expand_);
  }

  Tensor forward(const Tensor& x) const {
    Tensor s = ops::global_avg_pool(x);
    s = ops::silu(reduce_->forward(s));
    s = ops::sigmoid(expand_->forward(s));
    return ops::mul_channel(x, s);
  }

 private:
  std::shared_ptr<Conv2d> reduce_, expand_;
};

class MBConv : public Module {
 public:
  MBConv(int cin, int cout, int kernel, int stride, int expand_ratio, RngStream& rng)
      : skip_(stride == 1 && cin == cout) {
    const int mid = cin * expand_ratio;
    if (expand_ratio != 1) {
      expand_ = std::make_shared<ConvBnAct>(cin, mid, 1, 1, rng, ConvBnAct::Act::silu);
      register_module("expand", expand_);
    }
    dw_ = std::make_shared<ConvBnAct>(mid, mid, kernel, stride, rng, ConvBnAct::Act::silu, mid);
    register_module("dw", dw_);
    se_ = std::make_shared<SqueezeExcite>(mid, std::max(1, cin / 4), rng);
    register_module("se", se_);
    project_ = std::make_shared<ConvBnAct>(mid, cout, 1, 1, rng, ConvBnAct::Act::none);
    register_module("project", project_);
  }

  Tensor forward(const Tensor& x) const {
    Tensor h = expand_ ? expand_->forward(x) : x;
    h = dw_->forward(h);
    h = se_->forward(h);
    h = project_->forward(h);
    return skip_ ? ops::add(h, x) : h;
  }

 private:
  std::shared_ptr<ConvBnAct> expand_, dw_, project_;
  std::shared_ptr<SqueezeExcite> se_;
  bool skip_;
};

// EfficientNet-b0 trunk through the 112-channel stage; level channels
// 24/40/112 at strides 4/8/16.
class EfficientNetB0 : public Backbone {
 public:
  explicit EfficientNetB0(RngStream& rng) {
    stem_ = std::make_shared<ConvBnAct>(3, 32, 3, 2, rng, ConvBnAct::Act::silu);
    register_module("stem", stem_);
    struct StageDef {
      int cout, kernel, stride, expand, repeats;
    };
    // stages 1..5 of the b0 configuration
    const StageDef defs[] = {
        {16, 3, 1, 1, 1}, {24, 3, 2, 6, 2}, {40, 5, 2, 6, 2}, {80, 3, 2, 6, 3}, {112, 5, 1, 6, 3},
    };
    int cin = 32, idx = 0;
    for (const auto& d : defs) {
      std::vector<std::shared_ptr<MBConv>> stage;
      for (int i = 0; i < d.repeats; ++i) {
        auto blk = std::make_shared<MBConv>(i == 0 ? cin : d.cout, d.cout, d.kernel,
                                            i == 0 ? d.stride : 1, d.expand, rng);
        register_module("block" + std::to_string(idx++), blk);
        stage.push_back(blk);
      }
      stages_.push_back(std::move(stage));
      cin = d.cout;
    }
  }

  std::vector<Tensor> forward_levels(const Tensor& x) const override {
    Tensor h = stem_->forward(x);
    std::vector<Tensor> levels;
    for (size_t s = 0; s < stages_.size(); ++s) {
      for (const auto& b : stages_[s]) h = b->forward(h);
      if (s == 1 || s == 2 || s == 4) levels.push_back(h);  // strides 4, 8, 16
    }
    return levels;
  }
  std::array<int, 3> level_channels() const override { return {24, 40, 112}; }

 private:
  std::shared_ptr<ConvBnAct> stem_;
  std::vector<std::vector<std::shared_ptr<MBConv>>> stages_;
};

}  // namespace

std::shared_ptr<Backbone> make_backbone(const std::string& arch, RngStream& rng) {
  if (arch == "tiny-a") return std::make_shared<TinyBackboneA>(rng);
  if (arch == "tiny-b") return std::make_shared<TinyBackboneB>(rng);
  if (arch == "wide-resnet-50") return std::make_shared<WideResNet50>(rng);
  if (arch == "efficientnet-b0") return std::make_shared<EfficientNetB0>(rng);
  throw ConfigError("unknown backbone arch: " + arch);
}

bool is_desk_arch(const std::string& arch) { return arch == "tiny-a" || arch == "tiny-b"; }

std::string desk_equivalent(const std::string& arch) {
  if (is_desk_arch(arch)) return arch;
  if (arch == "wide-resnet-50") return "tiny-a";
  if (arch == "efficientnet-b0") return "tiny-b";
  throw ConfigError("unknown backbone arch: " + arch);
}

TeacherNet::TeacherNet(const BackboneSpec& spec) {
  arch_ = spec.desk_scale ? desk_equivalent(spec.teacher_arch) : spec.teacher_arch;
  RngStream rng(derive_seed(spec.init_seed, tag_hash("teacher-init")));
  net_ = make_backbone(arch_, rng);
  if (is_desk_arch(arch_)) {
    stats_ = ImageStats{{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}};
  } else {
    const auto file = spec.weights_dir / (arch_ + ".cfrgt");
    if (std::filesystem::exists(file)) {
      auto tf = read_tensor_file(file);
      load_module_state(*net_, tf.tensors);
    } else if (!spec.allow_random_teacher) {
      throw DataError("pretrained teacher weights not found: " + file.string() +
                      " (expected a tensor file exporting '" + arch_ +
                      "'; use desk_scale or allow_random_teacher to run without)");
    }
  }
  net_->set_training(false);
  net_->freeze();
}

FeaturePyramid TeacherNet::forward(const Tensor& normalized, PyramidSource tag,
                                   std::vector<std::string> source_ids) const {
  NoGradGuard guard;
  FeaturePyramid pyr;
  pyr.levels = net_->forward_levels(normalized);
  pyr.source = tag;
  pyr.source_ids = std::move(source_ids);
  return pyr;
}

StudentNet::StudentNet(const BackboneSpec& spec, const std::array<int, 3>& teacher_channels) {
  std::string arch = spec.homogeneous_mode ? spec.teacher_arch : spec.student_arch;
  if (spec.desk_scale) arch = desk_equivalent(arch);
  arch_ = arch;
  RngStream rng(derive_seed(spec.init_seed, tag_hash("student-init")));
  trunk_ = make_backbone(arch_, rng);
  register_module("trunk", trunk_);
  if (!spec.desk_scale && spec.student_pretrained) {
    const auto file = spec.weights_dir / (arch_ + ".cfrgt");
    if (!std::filesystem::exists(file))
      throw DataError("pretrained student weights not found: " + file.string() +
                      " (set backbone.student_pretrained=false to train from scratch)");
    auto tf = read_tensor_file(file);
    load_module_state(*trunk_, tf.tensors, "");
  }
  const auto own = trunk_->level_channels();
  for (int i = 0; i < 3; ++i) {
    auto proj = std::make_shared<Conv2d>(own[(size_t)i], teacher_channels[(size_t)i], 1, 1, 0, rng);
    register_module("proj" + std::to_string(i), proj);
    projections_.push_back(proj);
  }
}

FeaturePyramid StudentNet::forward(const Tensor& normalized,
                                   std::vector<std::string> source_ids) const {
  FeaturePyramid pyr;
  auto raw = trunk_->forward_levels(normalized);
  for (int i = 0; i < 3; ++i) pyr.levels.push_back(projections_[(size_t)i]->forward(raw[(size_t)i]));
  pyr.source = PyramidSource::student_on_xa;
  pyr.source_ids = std::move(source_ids);
  return pyr;
}

}  // namespace cfrg
