#pragma once

#include <filesystem>
#include <string>

namespace cfrg {

// Self-contained synthetic mini-dataset in the MVTec-style layout, used by
// the tests, the acceptance suite and the quickstart. Normal images are a
// smooth shaded plate; defective test images carry 1-2 planted high-contrast
// blobs with pixel-exact masks. Deterministic in (spec, seed).
struct ToyDatasetSpec {
  int n_train = 60;
  int n_test_good = 20;
  int n_test_defect = 20;
  int image_size = 64;
  uint64_t seed = 7;
  std::string category = "widget";
  std::string defect_type = "blob";
};

void make_mini_dataset(const std::filesystem::path& root, const ToyDatasetSpec& spec = {});

// Procedural high-contrast textures (stripes, checkers, noise) serving as
// the synthesis appearance source; keeps the repo free of dataset payloads.
void make_texture_dir(const std::filesystem::path& dir, int count = 12, int size = 64,
                      uint64_t seed = 11);

}  // namespace cfrg
