#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cfrg/trainer.hpp"

namespace cfrg::commands {

struct PreprocessArgs {
  std::filesystem::path input;
  std::filesystem::path output;
  TileSpec tiles;
};

// Tiles every image under input (recursively, lexicographic order) and
// writes the tiles plus a JSON manifest of (source, offset, size) entries.
void preprocess(const PreprocessArgs& args);

// Per-category training; returns the per-category results.
std::vector<std::pair<std::string, TrainResult>> train(
    const TrainConfig& cfg, const std::optional<std::filesystem::path>& resume = std::nullopt);

struct EvalArgs {
  TrainConfig cfg;
  // default: <output_dir>/<category>/checkpoint_latest.cfrgt
  std::optional<std::filesystem::path> checkpoint;
  // consume prediction dumps written by `infer` instead of running the model
  std::optional<std::filesystem::path> predictions_dir;
  bool allow_hash_mismatch = false;
};

// Returns one report per category plus a trailing {"mean", ...} row, and
// writes metrics_<category>.json and metrics.csv under the run directory.
std::vector<std::pair<std::string, MetricsReport>> eval(const EvalArgs& args);

struct InferArgs {
  TrainConfig cfg;
  std::optional<std::filesystem::path> checkpoint;
  // arbitrary image directory; defaults to each category's test split
  std::optional<std::filesystem::path> input_dir;
  std::filesystem::path output_dir;
  bool allow_hash_mismatch = false;
};

// Writes, per image: a 16-bit PNG heatmap, a raw float32 dump with a JSON
// shape sidecar, and appends the image score to scores.csv.
void infer(const InferArgs& args);

struct AblationRow {
  std::string name;  // full, wrc, ws, wp, wc, wh
  MetricsReport report;
};

// Trains and evaluates the six Table-style variants (full model plus five
// single-component removals) and writes a comparison table.
std::vector<AblationRow> ablate(const TrainConfig& cfg);

// Prediction dump naming shared by infer and eval.
std::string dump_id(const std::string& source_id);

}  // namespace cfrg::commands
