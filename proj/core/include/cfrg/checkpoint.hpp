#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "cfrg/tensor.hpp"

namespace cfrg {

// Student + recovery + segmentation weights, optimizer state and bookkeeping.
// Teacher weights are never stored; the teacher is rebuilt from its source.
struct Checkpoint {
  int epoch = 0;
  uint64_t config_hash = 0;
  int64_t optimizer_step = 0;
  std::vector<std::pair<std::string, Tensor>> model_state;
  std::vector<std::pair<std::string, Tensor>> optimizer_state;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cfrg
