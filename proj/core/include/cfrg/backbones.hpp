#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "cfrg/image.hpp"
#include "cfrg/nn.hpp"

namespace cfrg {

// Channel statistics the backbone was (pre)trained with.
struct ImageStats {
  std::array<real, 3> mean{0.485, 0.456, 0.406};
  std::array<real, 3> stddev{0.229, 0.224, 0.225};
};

enum class PyramidSource { teacher_on_xa, teacher_on_xn, student_on_xa, recovery };

// K=3 multi-scale feature maps at strides 4/8/16 of the input.
struct FeaturePyramid {
  std::vector<Tensor> levels;
  PyramidSource source = PyramidSource::teacher_on_xa;
  std::vector<std::string> source_ids;  // one per batch element, optional

  int batch() const { return levels.empty() ? 0 : levels[0].dim(0); }
};

// Batch of [0,1] images -> normalized NCHW tensor.
Tensor to_input_tensor(const std::vector<Image>& batch, const ImageStats& stats);

class Backbone : public nn::Module {
 public:
  // three stage outputs at strides 4/8/16
  virtual std::vector<Tensor> forward_levels(const Tensor& x) const = 0;
  virtual std::array<int, 3> level_channels() const = 0;
};

// arch identifiers: "wide-resnet-50", "efficientnet-b0", "tiny-a", "tiny-b"
std::shared_ptr<Backbone> make_backbone(const std::string& arch, RngStream& rng);
bool is_desk_arch(const std::string& arch);
// arch substitution applied when desk_scale is on
std::string desk_equivalent(const std::string& arch);

struct BackboneSpec {
  std::string teacher_arch = "wide-resnet-50";
  std::string student_arch = "efficientnet-b0";
  bool homogeneous_mode = false;  // student becomes a fresh teacher-arch copy
  bool desk_scale = false;
  std::filesystem::path weights_dir;
  bool student_pretrained = true;
  bool allow_random_teacher = false;  // full-scale experimentation escape hatch
  uint64_t init_seed = 0;
};

// Frozen feature extractor. Never receives gradients; forward runs without
// recording a tape.
class TeacherNet {
 public:
  explicit TeacherNet(const BackboneSpec& spec);

  FeaturePyramid forward(const Tensor& normalized, PyramidSource tag,
                         std::vector<std::string> source_ids = {}) const;
  std::array<int, 3> level_channels() const { return net_->level_channels(); }
  const ImageStats& stats() const { return stats_; }
  uint64_t weights_hash() const { return net_->state_hash(); }
  const nn::Module& module() const { return *net_; }
  const std::string& arch() const { return arch_; }

 private:
  std::shared_ptr<Backbone> net_;
  ImageStats stats_;
  std::string arch_;
};

// Learnable trunk plus per-level 1x1 projections onto the teacher's channel
// widths, so both pyramids align level for level.
class StudentNet : public nn::Module {
 public:
  StudentNet(const BackboneSpec& spec, const std::array<int, 3>& teacher_channels);

  FeaturePyramid forward(const Tensor& normalized, std::vector<std::string> source_ids = {}) const;
  const std::string& arch() const { return arch_; }

 private:
  std::shared_ptr<Backbone> trunk_;
  std::vector<std::shared_ptr<nn::Conv2d>> projections_;
  std::string arch_;
};

}  // namespace cfrg
