#include "cfrg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <thread>

#include "cfrg/tensorfile.hpp"

namespace cfrg {

Pipeline::Pipeline(const TrainConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  BackboneSpec spec;
  spec.teacher_arch = cfg.backbone.teacher_arch;
  spec.student_arch = cfg.backbone.student_arch;
  spec.homogeneous_mode = cfg.ablation.wh;
  spec.desk_scale = cfg.desk_scale;
  spec.weights_dir = cfg.backbone.weights_dir;
  spec.student_pretrained = cfg.backbone.student_pretrained;
  spec.allow_random_teacher = cfg.backbone.allow_random_teacher;
  spec.init_seed = cfg.seed;

  teacher_ = std::make_shared<TeacherNet>(spec);
  student_ = std::make_shared<StudentNet>(spec, teacher_->level_channels());
  if (!cfg.ablation.wrc) {
    RngStream rng(derive_seed(cfg.seed, tag_hash("recovery-init")));
    recovery_ = std::make_shared<RecoveryNet>(teacher_->level_channels(), rng);
  }
  if (!cfg.ablation.ws) {
    RngStream rng(derive_seed(cfg.seed, tag_hash("seg-init")));
    seg_ = std::make_shared<SegmentationNet>(teacher_->level_channels(), cfg.seg.width, rng);
  }
}

void Pipeline::set_training(bool training) {
  student_->set_training(training);
  if (recovery_) recovery_->set_training(training);
  if (seg_) seg_->set_training(training);
}

Pipeline::LossTensors Pipeline::forward_losses(const BatchData& batch) const {
  CFRG_CHECK(!batch.clean.empty() && batch.clean.size() == batch.corrupted.size() &&
                 batch.masks.size() == batch.clean.size(),
             "forward_losses: ragged batch");
  const ImageStats& stats = teacher_->stats();
  Tensor x_a = to_input_tensor(batch.corrupted, stats);
  Tensor x_n = to_input_tensor(batch.clean, stats);

  FeaturePyramid f_ta = teacher_->forward(x_a, PyramidSource::teacher_on_xa, batch.ids);
  FeaturePyramid f_tn = teacher_->forward(x_n, PyramidSource::teacher_on_xn, batch.ids);
  FeaturePyramid f_sa = student_->forward(x_a, batch.ids);

  CosineDistanceMap distances = cosine_distance(f_ta, f_sa);
  DistillLossOptions dopts;
  dopts.push_enabled = cfg_.distill.push_enabled && !cfg_.ablation.wp;
  dopts.clamp_push = cfg_.distill.clamp_push;

  LossTensors out;
  out.dis = distill_loss(distances, batch.masks, dopts);

  FeaturePyramid f_r;
  if (recovery_) {
    f_r = recovery_->forward(f_ta);
    out.rec = recovery_loss(f_r, f_tn);
  }

  if (seg_) {
    std::vector<Tensor> w_d = distill_weight(distances);
    const bool hint = recovery_ != nullptr && !cfg_.ablation.wc;
    std::vector<Tensor> w_r;
    if (hint) w_r = recovery_weight(f_ta, f_r);
    const bool detach = cfg_.loss.detach_hints || cfg_.train_mode == "alternating";
    GuidedFeatures guided = guide(f_ta, w_d, w_r, hint, detach);
    SegOutput so = seg_->forward(guided.in_s, cfg_.resolution, cfg_.resolution);
    out.bce = bce_loss(so.probs, batch.masks);
  }

  LossWeights weights{cfg_.loss.lambda_dis, cfg_.loss.lambda_rec, cfg_.loss.lambda_bce};
  out.all = total_loss(out.dis, out.rec, out.bce, weights);
  return out;
}

AnomalyScoreMap Pipeline::score_image(const Image& image) const {
  NoGradGuard guard;
  const int res = cfg_.resolution;
  CFRG_CHECK(image.height == res && image.width == res, "score_image: wrong resolution");
  Tensor x = to_input_tensor({image}, teacher_->stats());
  FeaturePyramid f_t = teacher_->forward(x, PyramidSource::teacher_on_xa);

  Map2D rec_map(res, res, 0.0);
  FeaturePyramid f_r;
  if (recovery_) {
    f_r = recovery_->forward(f_t);
    rec_map = recovery_similarity_map(f_t, f_r, res, res);
  }

  Map2D seg_map(res, res, 0.0);
  if (seg_) {
    FeaturePyramid f_s = student_->forward(x);
    CosineDistanceMap distances = cosine_distance(f_t, f_s);
    std::vector<Tensor> w_d = distill_weight(distances);
    const bool hint = recovery_ != nullptr && !cfg_.ablation.wc;
    std::vector<Tensor> w_r;
    if (hint) w_r = recovery_weight(f_t, f_r);
    GuidedFeatures guided = guide(f_t, w_d, w_r, hint, /*detach_hints=*/false);
    SegOutput so = seg_->forward(guided.in_s, res, res);
    std::copy(so.probs.data().begin(), so.probs.data().end(), seg_map.data.begin());
  }

  FuseOptions fopts;
  fopts.sigma = cfg_.infer.sigma;
  fopts.score_mode =
      cfg_.infer.image_score == "max" ? ImageScoreMode::max : ImageScoreMode::topk_mean;
  fopts.top_k = cfg_.infer.top_k;
  return fuse_and_smooth(rec_map, seg_map, fopts);
}

std::vector<std::pair<std::string, Tensor>> Pipeline::trainable_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (auto& [n, t] : student_->named_parameters("student.")) out.emplace_back(n, t);
  if (recovery_)
    for (auto& [n, t] : recovery_->named_parameters("recovery.")) out.emplace_back(n, t);
  if (seg_)
    for (auto& [n, t] : seg_->named_parameters("seg.")) out.emplace_back(n, t);
  return out;
}

std::vector<std::pair<std::string, Tensor>> Pipeline::state() const {
  std::vector<std::pair<std::string, Tensor>> out = module_state(*student_, "student.");
  if (recovery_) {
    auto r = module_state(*recovery_, "recovery.");
    out.insert(out.end(), r.begin(), r.end());
  }
  if (seg_) {
    auto s = module_state(*seg_, "seg.");
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

void Pipeline::load_state(const std::vector<std::pair<std::string, Tensor>>& state) {
  load_module_state(*student_, state, "student.");
  if (recovery_) load_module_state(*recovery_, state, "recovery.");
  if (seg_) load_module_state(*seg_, state, "seg.");
}

// --------------------------------------------------------------------------

Trainer::Trainer(TrainConfig cfg, std::string category)
    : cfg_(std::move(cfg)), category_(std::move(category)) {
  cfg_.validate();
  pipeline_ = std::make_unique<Pipeline>(cfg_);
}

std::filesystem::path Trainer::output_dir() const { return cfg_.output_dir / category_; }

namespace {

// Deterministic per-sample corruption: the stream depends only on
// (seed, epoch, sample index), so worker count and resume point cannot
// change the draw.
Pipeline::BatchData assemble_batch(const std::vector<ImageSample>& samples,
                                   const std::vector<size_t>& indices, const TrainConfig& cfg,
                                   const TexturePool* pool, int epoch) {
  Pipeline::BatchData bd;
  const size_t n = indices.size();
  bd.corrupted.resize(n);
  bd.clean.resize(n);
  bd.masks.resize(n);
  bd.ids.resize(n);

  auto one = [&](size_t k) {
    const ImageSample& s = samples[indices[k]];
    bd.clean[k] = s.image;
    bd.ids[k] = s.source_id;
    if (pool && cfg.synth.synth_probability > 0) {
      RngStream rng(derive_seed(cfg.seed, tag_hash("synth"), (uint64_t)epoch,
                                (uint64_t)indices[k]));
      SynthResult sr = synthesize(s, cfg.synth, *pool, rng);
      bd.corrupted[k] = std::move(sr.image);
      bd.masks[k] = std::move(sr.mask);
    } else {
      bd.corrupted[k] = s.image;
      bd.masks[k] = Mask(s.image.height, s.image.width, 0);
    }
  };

  const int workers = std::min<int>(cfg.workers, (int)n);
  if (workers > 1) {
    std::vector<std::thread> threads;
    for (int w = 0; w < workers; ++w)
      threads.emplace_back([&, w]() {
        for (size_t k = (size_t)w; k < n; k += (size_t)workers) one(k);
      });
    for (auto& t : threads) t.join();
  } else {
    for (size_t k = 0; k < n; ++k) one(k);
  }
  return bd;
}

}  // namespace

TrainResult Trainer::run(const std::optional<std::filesystem::path>& resume) {
  // fail fast on dataset problems before any epoch work
  DatasetLayout layout = scan_layout(cfg_.data_root, category_);
  std::vector<SampleEntry> train_entries = layout.split_entries(Split::train);
  if (train_entries.empty())
    throw DataError("no training samples for category " + category_);

  std::vector<ImageSample> samples;
  samples.reserve(train_entries.size());
  for (const auto& e : train_entries) samples.push_back(load_sample(e, cfg_.resolution));

  std::unique_ptr<TexturePool> pool;
  if (cfg_.synth.synth_probability > 0) pool = std::make_unique<TexturePool>(cfg_.synth.texture_root);

  nn::AdamW::Options oo;
  oo.lr = cfg_.optimizer.lr;
  oo.beta1 = cfg_.optimizer.beta1;
  oo.beta2 = cfg_.optimizer.beta2;
  oo.eps = cfg_.optimizer.eps;
  oo.weight_decay = cfg_.optimizer.weight_decay;
  nn::AdamW optimizer(pipeline_->trainable_parameters(), oo);

  int start_epoch = 1;
  if (resume) {
    Checkpoint ckpt = load_checkpoint(*resume);
    if (ckpt.config_hash != cfg_.hash())
      throw ConfigError("checkpoint config hash mismatch: " + resume->string());
    pipeline_->load_state(ckpt.model_state);
    // optimizer slots match trainable order; restore by name
    std::map<std::string, const Tensor*> lookup;
    for (const auto& [n, t] : ckpt.optimizer_state) lookup[n] = &t;
    for (auto& [name, t] : optimizer.state_tensors()) {
      auto it = lookup.find(name);
      if (it == lookup.end()) throw DataError("optimizer state missing tensor " + name);
      CFRG_CHECK(it->second->shape() == t.shape(), "optimizer state shape mismatch");
      Tensor dst = t;
      std::copy(it->second->data().begin(), it->second->data().end(), dst.data().begin());
    }
    optimizer.set_step_count(ckpt.optimizer_step);
    start_epoch = ckpt.epoch + 1;
  }

  const uint64_t teacher_hash = pipeline_->teacher().weights_hash();

  std::filesystem::create_directories(output_dir());
  {
    std::ofstream cf(output_dir() / "config.json");
    cf << cfg_.to_json().dump(2) << "\n";
  }
  std::ofstream log(output_dir() / "loss_log.jsonl",
                    start_epoch > 1 ? std::ios::app : std::ios::trunc);

  TrainResult result;
  pipeline_->set_training(true);

  int global_step = (start_epoch - 1) * (((int)samples.size() + cfg_.batch_size - 1) / cfg_.batch_size);
  for (int epoch = start_epoch; epoch <= cfg_.epochs; ++epoch) {
    optimizer.set_lr(cfg_.lr_at_epoch(epoch));

    std::vector<size_t> order(samples.size());
    std::iota(order.begin(), order.end(), 0);
    RngStream shuffle_rng(derive_seed(cfg_.seed, tag_hash("shuffle"), (uint64_t)epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());

    for (size_t off = 0; off < order.size(); off += (size_t)cfg_.batch_size) {
      const size_t end = std::min(order.size(), off + (size_t)cfg_.batch_size);
      std::vector<size_t> indices(order.begin() + (std::ptrdiff_t)off,
                                  order.begin() + (std::ptrdiff_t)end);
      Pipeline::BatchData bd = assemble_batch(samples, indices, cfg_, pool.get(), epoch);

      Pipeline::LossTensors losses = pipeline_->forward_losses(bd);
      if (!std::isfinite(losses.all.item()))
        throw NumericError("training diverged: non-finite loss at epoch " +
                           std::to_string(epoch) + " (last-good checkpoint of epoch " +
                           std::to_string(epoch - 1) + " is retained)");

      optimizer.zero_grad();
      losses.all.backward();
      optimizer.step();

      StepRecord rec;
      rec.epoch = epoch;
      rec.step = global_step++;
      rec.l_dis = losses.dis.defined() ? losses.dis.item() : 0.0;
      rec.l_rec = losses.rec.defined() ? losses.rec.item() : 0.0;
      rec.l_bce = losses.bce.defined() ? losses.bce.item() : 0.0;
      rec.l_all = losses.all.item();
      rec.lr = optimizer.lr();
      result.steps.push_back(rec);

      nlohmann::json line = {{"epoch", rec.epoch},   {"step", rec.step},   {"l_dis", rec.l_dis},
                             {"l_rec", rec.l_rec},   {"l_bce", rec.l_bce}, {"l_all", rec.l_all},
                             {"lr", rec.lr}};
      log << line.dump() << "\n";
    }
    log.flush();

    Checkpoint ckpt;
    ckpt.epoch = epoch;
    ckpt.config_hash = cfg_.hash();
    ckpt.optimizer_step = optimizer.step_count();
    ckpt.model_state = pipeline_->state();
    ckpt.optimizer_state = optimizer.state_tensors();
    save_checkpoint(output_dir() / ("checkpoint_epoch_" + std::to_string(epoch) + ".cfrgt"), ckpt);
    save_checkpoint(output_dir() / "checkpoint_latest.cfrgt", ckpt);
    result.final_epoch = epoch;
  }

  CFRG_CHECK(pipeline_->teacher().weights_hash() == teacher_hash,
             "frozen teacher was mutated during training");

  result.checkpoint_path = output_dir() / "checkpoint_latest.cfrgt";
  return result;
}

MetricsReport evaluate_pipeline(Pipeline& pipeline, const DatasetLayout& layout,
                                std::vector<EvalPair>* out_pairs,
                                std::vector<std::string>* out_ids) {
  pipeline.set_training(false);
  const int res = pipeline.config().resolution;
  std::vector<EvalPair> pairs;
  std::vector<std::string> ids;
  for (const SampleEntry& entry : layout.split_entries(Split::test)) {
    ImageSample sample = load_sample(entry, res);
    AnomalyScoreMap score = pipeline.score_image(sample.image);
    EvalPair p;
    p.pixel_scores = std::move(score.pixel_scores);
    p.image_score = score.image_score;
    p.mask = sample.mask.empty() ? Mask(res, res, 0) : sample.mask;
    p.anomalous = entry.label == Label::anomalous;
    pairs.push_back(std::move(p));
    ids.push_back(entry.source_id);
  }
  ProOptions popts;
  popts.fpr_limit = pipeline.config().metrics.pro_fpr_limit;
  popts.max_thresholds = pipeline.config().metrics.pro_max_thresholds;
  MetricsReport report = evaluate_category(pairs, popts);
  if (out_pairs) *out_pairs = std::move(pairs);
  if (out_ids) *out_ids = std::move(ids);
  return report;
}

Pipeline restore_pipeline(const TrainConfig& cfg, const std::filesystem::path& checkpoint,
                          bool allow_hash_mismatch) {
  Checkpoint ckpt = load_checkpoint(checkpoint);
  if (ckpt.config_hash != cfg.hash()) {
    if (!allow_hash_mismatch)
      throw ConfigError("checkpoint " + checkpoint.string() +
                        " was written under a different config (pass --allow-hash-mismatch to "
                        "proceed anyway)");
    std::fprintf(stderr, "[eval] warning: config hash mismatch for %s, proceeding as requested\n",
                 checkpoint.string().c_str());
  }
  Pipeline pipeline(cfg);
  pipeline.load_state(ckpt.model_state);
  return pipeline;
}

}  // namespace cfrg
