#include "cfrg/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace cfrg {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, const std::set<std::string>& allowed,
                         const std::string& scope) {
  if (!j.is_object()) throw ConfigError("config section '" + scope + "' must be an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key))
      throw ConfigError("unknown config key '" + (scope.empty() ? key : scope + "." + key) + "'");
}

template <typename T>
void get_if(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

void get_path(const json& j, const char* key, std::filesystem::path& dst) {
  if (j.contains(key)) dst = j.at(key).get<std::string>();
}

}  // namespace

void TrainConfig::validate() const {
  if (resolution <= 0 || resolution % 32 != 0)
    throw ConfigError("resolution must be a positive multiple of 32");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  for (int m : schedule.milestones)
    if (epochs < m)
      throw ConfigError("epochs must be >= every schedule milestone (milestone " +
                        std::to_string(m) + " > epochs " + std::to_string(epochs) + ")");
  if (!(schedule.gamma > 0 && schedule.gamma <= 1))
    throw ConfigError("schedule.gamma must be in (0,1]");
  if (optimizer.lr <= 0) throw ConfigError("optimizer.lr must be positive");
  if (optimizer.weight_decay < 0) throw ConfigError("optimizer.weight_decay must be >= 0");
  if (train_mode != "joint" && train_mode != "alternating")
    throw ConfigError("train_mode must be 'joint' or 'alternating'");
  if (infer.image_score != "max" && infer.image_score != "topk_mean")
    throw ConfigError("infer.image_score must be 'max' or 'topk_mean'");
  if (infer.top_k < 1) throw ConfigError("infer.top_k must be >= 1");
  if (infer.sigma < 0) throw ConfigError("infer.sigma must be >= 0");
  if (!(metrics.pro_fpr_limit > 0 && metrics.pro_fpr_limit <= 1))
    throw ConfigError("metrics.pro_fpr_limit must be in (0,1]");
  if (metrics.pro_max_thresholds < 2) throw ConfigError("metrics.pro_max_thresholds must be >= 2");
  if (seg.width < 1) throw ConfigError("seg.width must be >= 1");
  if (workers < 0) throw ConfigError("workers must be >= 0");
  synth.validate();
}

json TrainConfig::to_json() const {
  json j;
  j["resolution"] = resolution;
  j["seed"] = seed;
  j["epochs"] = epochs;
  j["batch_size"] = batch_size;
  j["categories"] = categories;
  j["data_root"] = data_root.generic_string();
  j["output_dir"] = output_dir.generic_string();
  j["desk_scale"] = desk_scale;
  j["workers"] = workers;
  j["train_mode"] = train_mode;
  j["optimizer"] = {{"lr", optimizer.lr},
                    {"weight_decay", optimizer.weight_decay},
                    {"beta1", optimizer.beta1},
                    {"beta2", optimizer.beta2},
                    {"eps", optimizer.eps}};
  j["schedule"] = {{"milestones", schedule.milestones}, {"gamma", schedule.gamma}};
  j["loss"] = {{"lambda_dis", loss.lambda_dis},
               {"lambda_rec", loss.lambda_rec},
               {"lambda_bce", loss.lambda_bce},
               {"detach_hints", loss.detach_hints}};
  j["distill"] = {{"push_enabled", distill.push_enabled}, {"clamp_push", distill.clamp_push}};
  j["ablation"] = {{"wrc", ablation.wrc},
                   {"ws", ablation.ws},
                   {"wp", ablation.wp},
                   {"wc", ablation.wc},
                   {"wh", ablation.wh}};
  j["backbone"] = {{"teacher_arch", backbone.teacher_arch},
                   {"student_arch", backbone.student_arch},
                   {"weights_dir", backbone.weights_dir.generic_string()},
                   {"student_pretrained", backbone.student_pretrained},
                   {"allow_random_teacher", backbone.allow_random_teacher}};
  j["synth"] = {{"perlin_period_min", synth.perlin_period_min},
                {"perlin_period_max", synth.perlin_period_max},
                {"threshold", synth.threshold},
                {"blend_beta_min", synth.blend_beta_min},
                {"blend_beta_max", synth.blend_beta_max},
                {"texture_root", synth.texture_root.generic_string()},
                {"rotation_min_deg", synth.rotation_min_deg},
                {"rotation_max_deg", synth.rotation_max_deg},
                {"synth_probability", synth.synth_probability},
                {"foreground_only", synth.foreground_only}};
  j["infer"] = {{"sigma", infer.sigma}, {"image_score", infer.image_score}, {"top_k", infer.top_k}};
  j["metrics"] = {{"pro_fpr_limit", metrics.pro_fpr_limit},
                  {"pro_max_thresholds", metrics.pro_max_thresholds}};
  j["seg"] = {{"width", seg.width}};
  return j;
}

TrainConfig TrainConfig::from_json(const json& j) {
  reject_unknown_keys(
      j,
      {"resolution", "seed", "epochs", "batch_size", "categories", "data_root", "output_dir",
       "desk_scale", "workers", "train_mode", "optimizer", "schedule", "loss", "distill",
       "ablation", "backbone", "synth", "infer", "metrics", "seg"},
      "");

  TrainConfig c;
  get_if(j, "resolution", c.resolution);
  get_if(j, "seed", c.seed);
  get_if(j, "epochs", c.epochs);
  get_if(j, "batch_size", c.batch_size);
  get_if(j, "categories", c.categories);
  get_path(j, "data_root", c.data_root);
  get_path(j, "output_dir", c.output_dir);
  get_if(j, "desk_scale", c.desk_scale);
  get_if(j, "workers", c.workers);
  get_if(j, "train_mode", c.train_mode);

  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    reject_unknown_keys(o, {"lr", "weight_decay", "beta1", "beta2", "eps"}, "optimizer");
    get_if(o, "lr", c.optimizer.lr);
    get_if(o, "weight_decay", c.optimizer.weight_decay);
    get_if(o, "beta1", c.optimizer.beta1);
    get_if(o, "beta2", c.optimizer.beta2);
    get_if(o, "eps", c.optimizer.eps);
  }
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    reject_unknown_keys(s, {"milestones", "gamma"}, "schedule");
    get_if(s, "milestones", c.schedule.milestones);
    get_if(s, "gamma", c.schedule.gamma);
  }
  if (j.contains("loss")) {
    const auto& l = j.at("loss");
    reject_unknown_keys(l, {"lambda_dis", "lambda_rec", "lambda_bce", "detach_hints"}, "loss");
    get_if(l, "lambda_dis", c.loss.lambda_dis);
    get_if(l, "lambda_rec", c.loss.lambda_rec);
    get_if(l, "lambda_bce", c.loss.lambda_bce);
    get_if(l, "detach_hints", c.loss.detach_hints);
  }
  if (j.contains("distill")) {
    const auto& d = j.at("distill");
    reject_unknown_keys(d, {"push_enabled", "clamp_push"}, "distill");
    get_if(d, "push_enabled", c.distill.push_enabled);
    get_if(d, "clamp_push", c.distill.clamp_push);
  }
  if (j.contains("ablation")) {
    const auto& a = j.at("ablation");
    reject_unknown_keys(a, {"wrc", "ws", "wp", "wc", "wh"}, "ablation");
    get_if(a, "wrc", c.ablation.wrc);
    get_if(a, "ws", c.ablation.ws);
    get_if(a, "wp", c.ablation.wp);
    get_if(a, "wc", c.ablation.wc);
    get_if(a, "wh", c.ablation.wh);
  }
  if (j.contains("backbone")) {
    const auto& b = j.at("backbone");
    reject_unknown_keys(
        b, {"teacher_arch", "student_arch", "weights_dir", "student_pretrained",
            "allow_random_teacher"},
        "backbone");
    get_if(b, "teacher_arch", c.backbone.teacher_arch);
    get_if(b, "student_arch", c.backbone.student_arch);
    get_path(b, "weights_dir", c.backbone.weights_dir);
    get_if(b, "student_pretrained", c.backbone.student_pretrained);
    get_if(b, "allow_random_teacher", c.backbone.allow_random_teacher);
  }
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    reject_unknown_keys(s,
                        {"perlin_period_min", "perlin_period_max", "threshold", "blend_beta_min",
                         "blend_beta_max", "texture_root", "rotation_min_deg", "rotation_max_deg",
                         "synth_probability", "foreground_only"},
                        "synth");
    get_if(s, "perlin_period_min", c.synth.perlin_period_min);
    get_if(s, "perlin_period_max", c.synth.perlin_period_max);
    get_if(s, "threshold", c.synth.threshold);
    get_if(s, "blend_beta_min", c.synth.blend_beta_min);
    get_if(s, "blend_beta_max", c.synth.blend_beta_max);
    get_path(s, "texture_root", c.synth.texture_root);
    get_if(s, "rotation_min_deg", c.synth.rotation_min_deg);
    get_if(s, "rotation_max_deg", c.synth.rotation_max_deg);
    get_if(s, "synth_probability", c.synth.synth_probability);
    get_if(s, "foreground_only", c.synth.foreground_only);
  }
  if (j.contains("infer")) {
    const auto& i = j.at("infer");
    reject_unknown_keys(i, {"sigma", "image_score", "top_k"}, "infer");
    get_if(i, "sigma", c.infer.sigma);
    get_if(i, "image_score", c.infer.image_score);
    get_if(i, "top_k", c.infer.top_k);
  }
  if (j.contains("metrics")) {
    const auto& m = j.at("metrics");
    reject_unknown_keys(m, {"pro_fpr_limit", "pro_max_thresholds"}, "metrics");
    get_if(m, "pro_fpr_limit", c.metrics.pro_fpr_limit);
    get_if(m, "pro_max_thresholds", c.metrics.pro_max_thresholds);
  }
  if (j.contains("seg")) {
    const auto& s = j.at("seg");
    reject_unknown_keys(s, {"width"}, "seg");
    get_if(s, "width", c.seg.width);
  }
  c.validate();
  return c;
}

TrainConfig TrainConfig::load_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path.string());
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

uint64_t TrainConfig::hash() const { return fnv1a(to_json().dump()); }

real TrainConfig::lr_at_epoch(int epoch) const {
  real lr = optimizer.lr;
  for (int m : schedule.milestones)
    if (epoch > m) lr *= schedule.gamma;
  return lr;
}

}  // namespace cfrg
