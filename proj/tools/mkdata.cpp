// Generates the self-contained synthetic mini-dataset and the procedural
// texture set, so the training pipeline can be exercised without any
// external data.

#include <CLI11.hpp>

#include <cstdio>

#include "cfrg/toydata.hpp"

int main(int argc, char** argv) {
  CLI::App app{"generate the synthetic mini-dataset and texture set"};

  std::string data_dir = "mini-dataset";
  std::string texture_dir = "mini-textures";
  cfrg::ToyDatasetSpec spec;
  app.add_option("--data", data_dir, "dataset output directory");
  app.add_option("--textures", texture_dir, "texture output directory");
  app.add_option("--train", spec.n_train, "number of normal training images");
  app.add_option("--test-good", spec.n_test_good, "number of normal test images");
  app.add_option("--test-defect", spec.n_test_defect, "number of defective test images");
  app.add_option("--size", spec.image_size, "square image size in pixels");
  app.add_option("--seed", spec.seed, "generator seed");
  app.add_option("--category", spec.category, "category name");

  CLI11_PARSE(app, argc, argv);

  cfrg::make_mini_dataset(data_dir, spec);
  cfrg::make_texture_dir(texture_dir);
  std::printf("wrote %s/%s (%d train, %d+%d test) and %s\n", data_dir.c_str(),
              spec.category.c_str(), spec.n_train, spec.n_test_good, spec.n_test_defect,
              texture_dir.c_str());
  return 0;
}
