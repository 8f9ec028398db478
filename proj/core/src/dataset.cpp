#include "cfrg/dataset.hpp"

#include <algorithm>
#include <cmath>

namespace cfrg {

namespace fs = std::filesystem;

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](char c) { return (char)std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

std::vector<fs::path> sorted_images(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && is_image_file(e.path())) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::string> sorted_subdirs(const fs::path& dir) {
  std::vector<std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) out.push_back(e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

// MVTec convention keeps masks as <stem>_mask.png; plain <stem>.png also
// accepted.
fs::path resolve_mask(const fs::path& gt_dir, const std::string& stem) {
  for (const auto& candidate :
       {gt_dir / (stem + "_mask.png"), gt_dir / (stem + ".png"), gt_dir / (stem + "_mask.bmp"),
        gt_dir / (stem + ".bmp")}) {
    if (fs::exists(candidate)) return candidate;
  }
  return {};
}

}  // namespace

std::vector<SampleEntry> DatasetLayout::split_entries(Split s) const {
  std::vector<SampleEntry> out;
  for (const auto& e : entries)
    if (e.split == s) out.push_back(e);
  return out;
}

nlohmann::json DatasetLayout::manifest() const {
  nlohmann::json j;
  j["category"] = category;
  auto& arr = j["samples"] = nlohmann::json::array();
  for (const auto& e : entries) {
    nlohmann::json s;
    s["image"] = fs::relative(e.image_path, root).generic_string();
    s["mask"] = e.mask_path.empty() ? "" : fs::relative(e.mask_path, root).generic_string();
    s["split"] = e.split == Split::train ? "train" : "test";
    s["label"] = e.label == Label::normal ? "normal" : "anomalous";
    s["defect_type"] = e.defect_type;
    s["source_id"] = e.source_id;
    arr.push_back(s);
  }
  return j;
}

DatasetLayout scan_layout(const fs::path& root, const std::string& category) {
  const fs::path cat = root / category;
  if (!fs::exists(cat / "train") || !fs::exists(cat / "test"))
    throw DataError("malformed dataset tree: " + cat.string() + " must contain train/ and test/");

  DatasetLayout layout;
  layout.root = root;
  layout.category = category;

  for (const auto& sub : sorted_subdirs(cat / "train")) {
    if (sub != "good")
      throw DataError("malformed dataset tree: train split of " + category +
                      " contains non-good subfolder '" + sub + "'");
  }
  for (const auto& p : sorted_images(cat / "train" / "good")) {
    SampleEntry e;
    e.image_path = p;
    e.split = Split::train;
    e.label = Label::normal;
    e.defect_type = "good";
    e.source_id = category + "/train/good/" + p.stem().string();
    layout.entries.push_back(std::move(e));
  }

  for (const auto& defect : sorted_subdirs(cat / "test")) {
    for (const auto& p : sorted_images(cat / "test" / defect)) {
      SampleEntry e;
      e.image_path = p;
      e.split = Split::test;
      e.defect_type = defect;
      e.source_id = category + "/test/" + defect + "/" + p.stem().string();
      if (defect == "good") {
        e.label = Label::normal;
      } else {
        e.label = Label::anomalous;
        e.mask_path = resolve_mask(cat / "ground_truth" / defect, p.stem().string());
        if (e.mask_path.empty())
          throw DataError("missing ground-truth mask for anomalous test image: " + p.string());
      }
      layout.entries.push_back(std::move(e));
    }
  }

  if (layout.entries.empty())
    throw DataError("malformed dataset tree: category '" + category + "' has no images");
  return layout;
}

void TileSpec::validate() const {
  if (max_side <= 0) throw ConfigError("tile max_side must be positive");
  if (overlap_fraction < 0 || overlap_fraction >= 1)
    throw ConfigError("tile overlap_fraction must be in [0,1)");
  if (min_keep_fraction <= 0 || min_keep_fraction > 1)
    throw ConfigError("tile min_keep_fraction must be in (0,1]");
}

std::vector<int> tile_axis_offsets(int extent, const TileSpec& spec) {
  if (extent <= spec.max_side) return {0};
  const int stride = std::max(1, (int)std::floor(spec.max_side * (1.0 - spec.overlap_fraction)));
  std::vector<int> offsets;
  int off = 0;
  while (true) {
    offsets.push_back(off);
    if (off + spec.max_side >= extent) break;
    off = std::min(off + stride, extent - spec.max_side);
  }
  return offsets;
}

std::vector<TileRect> tile_grid(int height, int width, const TileSpec& spec) {
  spec.validate();
  CFRG_CHECK(height > 0 && width > 0, "tile_grid on empty image");
  const int min_side = (int)std::ceil(spec.min_keep_fraction * spec.max_side);
  std::vector<TileRect> rects;
  for (int y : tile_axis_offsets(height, spec))
    for (int x : tile_axis_offsets(width, spec)) {
      TileRect r;
      r.y = y;
      r.x = x;
      r.height = std::min(spec.max_side, height);
      r.width = std::min(spec.max_side, width);
      if (r.height < min_side || r.width < min_side) continue;  // undersized remainder
      rects.push_back(r);
    }
  return rects;
}

std::vector<std::pair<TileRect, Image>> tile_image(const Image& image, const TileSpec& spec) {
  std::vector<std::pair<TileRect, Image>> out;
  for (const TileRect& r : tile_grid(image.height, image.width, spec))
    out.emplace_back(r, crop(image, r.y, r.x, r.height, r.width));
  return out;
}

ImageSample load_sample(const SampleEntry& entry, int resolution) {
  ImageSample s;
  s.label = entry.label;
  s.source_id = entry.source_id;
  Image raw = read_image(entry.image_path);
  s.image = resize_bilinear(raw, resolution, resolution);
  if (!entry.mask_path.empty()) {
    Mask m = read_mask(entry.mask_path);
    s.mask = resize_nearest(m, resolution, resolution);
    CFRG_CHECK(s.mask.height == s.image.height && s.mask.width == s.image.width,
               "mask/image shape mismatch after resize");
  }
  return s;
}

void normalize_inplace(Image& image, const ImageStats& stats) {
  CFRG_CHECK(image.channels == 3, "normalize_inplace expects 3 channels");
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c)
        image.at(y, x, c) = (image.at(y, x, c) - stats.mean[(size_t)c]) / stats.stddev[(size_t)c];
}

}  // namespace cfrg
