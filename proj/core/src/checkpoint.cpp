#include "cfrg/checkpoint.hpp"

#include "cfrg/tensorfile.hpp"

namespace cfrg {

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json meta;
  meta["kind"] = "checkpoint";
  meta["epoch"] = ckpt.epoch;
  meta["config_hash"] = ckpt.config_hash;
  meta["optimizer_step"] = ckpt.optimizer_step;

  std::vector<std::pair<std::string, Tensor>> all;
  for (const auto& [n, t] : ckpt.model_state) all.emplace_back("model." + n, t);
  for (const auto& [n, t] : ckpt.optimizer_state) all.emplace_back("opt." + n, t);
  write_tensor_file(path, meta, all);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  TensorFile tf = read_tensor_file(path);
  if (tf.meta.value("kind", "") != "checkpoint")
    throw DataError("not a checkpoint file: " + path.string());
  Checkpoint ckpt;
  ckpt.epoch = tf.meta.at("epoch").get<int>();
  ckpt.config_hash = tf.meta.at("config_hash").get<uint64_t>();
  ckpt.optimizer_step = tf.meta.at("optimizer_step").get<int64_t>();
  for (auto& [name, t] : tf.tensors) {
    if (name.rfind("model.", 0) == 0)
      ckpt.model_state.emplace_back(name.substr(6), std::move(t));
    else if (name.rfind("opt.", 0) == 0)
      ckpt.optimizer_state.emplace_back(name.substr(4), std::move(t));
  }
  return ckpt;
}

}  // namespace cfrg
