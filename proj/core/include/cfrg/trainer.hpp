#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cfrg/checkpoint.hpp"
#include "cfrg/config.hpp"
#include "cfrg/dataset.hpp"
#include "cfrg/distill.hpp"
#include "cfrg/infer.hpp"
#include "cfrg/metrics.hpp"
#include "cfrg/recovery.hpp"
#include "cfrg/seghead.hpp"
#include "cfrg/synth.hpp"

namespace cfrg {

// Teacher + trainable branches wired per the ablation flags. WS drops the
// segmentation branch, WRC the recovery branch, WH swaps the student trunk
// for a fresh teacher architecture.
class Pipeline {
 public:
  explicit Pipeline(const TrainConfig& cfg);

  struct BatchData {
    std::vector<Image> corrupted;  // x_a in [0,1]
    std::vector<Image> clean;      // x_n in [0,1]
    std::vector<Mask> masks;       // G; empty mask = uncorrupted
    std::vector<std::string> ids;
  };

  struct LossTensors {
    Tensor dis, rec, bce, all;
  };

  // Builds the full training graph for one batch. Call in training mode.
  LossTensors forward_losses(const BatchData& batch) const;

  // Eval-mode anomaly scoring of a single [0,1] image.
  AnomalyScoreMap score_image(const Image& image) const;

  void set_training(bool training);

  std::vector<std::pair<std::string, Tensor>> trainable_parameters() const;
  std::vector<std::pair<std::string, Tensor>> state() const;  // params + buffers
  void load_state(const std::vector<std::pair<std::string, Tensor>>& state);

  const TeacherNet& teacher() const { return *teacher_; }
  const StudentNet& student() const { return *student_; }
  bool has_recovery() const { return recovery_ != nullptr; }
  bool has_segmentation() const { return seg_ != nullptr; }
  const TrainConfig& config() const { return cfg_; }

 private:
  TrainConfig cfg_;
  std::shared_ptr<TeacherNet> teacher_;
  std::shared_ptr<StudentNet> student_;
  std::shared_ptr<RecoveryNet> recovery_;
  std::shared_ptr<SegmentationNet> seg_;
};

struct StepRecord {
  int epoch = 0;
  int step = 0;  // global step index
  real l_dis = 0, l_rec = 0, l_bce = 0, l_all = 0;
  real lr = 0;
};

struct TrainResult {
  std::filesystem::path checkpoint_path;
  std::vector<StepRecord> steps;
  int final_epoch = 0;
};

// Per-category training loop: per step, synthesize anomalies, run both
// teacher passes, the student, recovery, and segmentation, then a single
// backward on the weighted total. Checkpoints every epoch plus a JSON-lines
// loss log.
class Trainer {
 public:
  Trainer(TrainConfig cfg, std::string category);

  TrainResult run(const std::optional<std::filesystem::path>& resume = std::nullopt);

  Pipeline& pipeline() { return *pipeline_; }
  std::filesystem::path output_dir() const;

 private:
  TrainConfig cfg_;
  std::string category_;
  std::unique_ptr<Pipeline> pipeline_;
};

// Scores every test sample of the layout with the pipeline and assembles the
// four metrics. Optionally exposes the per-image pairs.
MetricsReport evaluate_pipeline(Pipeline& pipeline, const DatasetLayout& layout,
                                std::vector<EvalPair>* out_pairs = nullptr,
                                std::vector<std::string>* out_ids = nullptr);

// Restores a pipeline from a checkpoint, verifying the config hash.
// On mismatch: throws unless allow_hash_mismatch, in which case it warns.
Pipeline restore_pipeline(const TrainConfig& cfg, const std::filesystem::path& checkpoint,
                          bool allow_hash_mismatch = false);

}  // namespace cfrg
