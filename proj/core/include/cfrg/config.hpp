#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfrg/seghead.hpp"
#include "cfrg/synth.hpp"

namespace cfrg {

struct OptimizerConfig {
  real lr = 5e-4;
  real weight_decay = 1e-5;
  real beta1 = 0.9;
  real beta2 = 0.999;
  real eps = 1e-8;
};

struct ScheduleConfig {
  std::vector<int> milestones{40, 45};
  real gamma = 0.2;
};

struct DistillConfig {
  bool push_enabled = true;
  bool clamp_push = true;
};

struct AblationConfig {
  bool wrc = false;  // remove the recovery branch
  bool ws = false;   // remove the segmentation branch
  bool wp = false;   // drop the push term of the distillation loss
  bool wc = false;   // bypass the recovery hint weight
  bool wh = false;   // homogeneous student (fresh teacher architecture)
};

struct BackboneConfig {
  std::string teacher_arch = "wide-resnet-50";
  std::string student_arch = "efficientnet-b0";
  std::filesystem::path weights_dir = "weights";
  bool student_pretrained = true;
  bool allow_random_teacher = false;
};

struct InferOptionsConfig {
  real sigma = 4.0;
  std::string image_score = "max";  // or "topk_mean"
  int top_k = 100;
};

struct MetricsOptionsConfig {
  real pro_fpr_limit = 0.3;
  int pro_max_thresholds = 5000;
};

struct LossConfig {
  real lambda_dis = 1.0;
  real lambda_rec = 1.0;
  real lambda_bce = 1.0;
  bool detach_hints = false;
};

struct SegConfig {
  int width = 128;
};

struct TrainConfig {
  int resolution = 256;
  uint64_t seed = 0;
  int epochs = 50;
  int batch_size = 32;
  std::vector<std::string> categories;
  std::filesystem::path data_root;
  std::filesystem::path output_dir = "runs";
  bool desk_scale = false;
  int workers = 0;                  // 0 = sequential loading
  std::string train_mode = "joint"; // "joint" or "alternating"

  OptimizerConfig optimizer;
  ScheduleConfig schedule;
  LossConfig loss;
  DistillConfig distill;
  AblationConfig ablation;
  BackboneConfig backbone;
  SynthConfig synth;
  InferOptionsConfig infer;
  MetricsOptionsConfig metrics;
  SegConfig seg;

  void validate() const;  // throws ConfigError
  nlohmann::json to_json() const;
  // strict parsing: unknown keys are rejected with the offending key named
  static TrainConfig from_json(const nlohmann::json& j);
  static TrainConfig load_file(const std::filesystem::path& path);
  uint64_t hash() const;  // over the canonical serialization

  real lr_at_epoch(int epoch) const;  // epochs counted from 1
};

}  // namespace cfrg
