#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cfrg/backbones.hpp"
#include "cfrg/image.hpp"

namespace cfrg {

enum class Split { train, test };
enum class Label { normal, anomalous };

// One dataset entry as discovered on disk (MVTec-style tree:
// category/train/good, category/test/<defect>, category/ground_truth/<defect>).
struct SampleEntry {
  std::filesystem::path image_path;
  std::filesystem::path mask_path;  // empty for normal samples
  Split split = Split::train;
  Label label = Label::normal;
  std::string defect_type;  // "good" for normals
  std::string source_id;    // category/split/defect/stem
};

struct DatasetLayout {
  std::filesystem::path root;
  std::string category;
  std::vector<SampleEntry> entries;  // lexicographic by path, deterministic

  std::vector<SampleEntry> split_entries(Split s) const;
  nlohmann::json manifest() const;  // relative paths, for golden comparisons
};

// Walks root/category and enumerates every sample with its resolved mask.
// Throws DataError on a missing mask for an anomalous test image, a train
// split containing non-good subfolders, or an empty category tree.
DatasetLayout scan_layout(const std::filesystem::path& root, const std::string& category);

// Sliding-window preprocessor for oversized images.
struct TileSpec {
  int max_side = 1024;
  real overlap_fraction = 0.20;
  real min_keep_fraction = 0.20;

  void validate() const;
};

struct TileRect {
  int y = 0, x = 0, height = 0, width = 0;
};

// Window origins along one axis: stride floor(win*(1-overlap)), final window
// clamped to the far edge. Whole-axis windows for sides <= max_side.
std::vector<int> tile_axis_offsets(int extent, const TileSpec& spec);
std::vector<TileRect> tile_grid(int height, int width, const TileSpec& spec);
std::vector<std::pair<TileRect, Image>> tile_image(const Image& image, const TileSpec& spec);

// A loaded, resized training/test sample. Image values stay in [0,1];
// normalization happens against backbone statistics downstream.
struct ImageSample {
  Image image;
  Mask mask;  // empty unless anomalous
  Label label = Label::normal;
  std::string source_id;
};

ImageSample load_sample(const SampleEntry& entry, int resolution);

// Channel normalization with the (teacher) backbone's pretraining statistics.
void normalize_inplace(Image& image, const ImageStats& stats);

}  // namespace cfrg
