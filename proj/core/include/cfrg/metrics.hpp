#pragma once

#include <vector>

#include <json.hpp>

#include "cfrg/image.hpp"

namespace cfrg {

struct MetricsReport {
  real i_auroc = 0;
  real p_auroc = 0;
  real p_pro = 0;
  real ap = 0;
  int n_images = 0;
  int n_defect_images = 0;

  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
};

// Exact rank-statistic AUROC (Mann-Whitney, ties contribute 0.5).
// Throws MetricError when only one class is present.
real auroc(const std::vector<real>& scores, const std::vector<uint8_t>& labels);

// AP = sum_k (R_k - R_{k-1}) * P_k over descending unique score thresholds.
// Throws MetricError when there is no positive.
real average_precision(const std::vector<real>& scores, const std::vector<uint8_t>& labels);

// Connected-component labels (8-connectivity, two-pass); 0 = background,
// regions numbered from 1.
struct ComponentLabels {
  int height = 0, width = 0;
  std::vector<int> labels;
  int count = 0;
};
ComponentLabels connected_components(const Mask& mask);

struct ProOptions {
  real fpr_limit = 0.3;
  // all unique scores when they fit, else this many quantile thresholds
  int max_thresholds = 5000;
};

// Per-region overlap averaged over ground-truth components, integrated over
// the pooled false-positive rate in [0, fpr_limit] (trapezoids), normalized
// by fpr_limit.
real pro_curve(const std::vector<Map2D>& score_maps, const std::vector<Mask>& masks,
               const ProOptions& opts = {});

// One test image's prediction paired with its ground truth. A defect-free
// image carries an all-zero (or empty) mask.
struct EvalPair {
  Map2D pixel_scores;
  real image_score = 0;
  Mask mask;
  bool anomalous = false;
};

// Pools pixels across the category for P-AUROC/AP, ranks image scores for
// I-AUROC, and integrates the PRO curve over the whole set.
MetricsReport evaluate_category(const std::vector<EvalPair>& pairs, const ProOptions& opts = {});

}  // namespace cfrg
