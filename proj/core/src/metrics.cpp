#include "cfrg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cfrg {

nlohmann::json MetricsReport::to_json() const {
  return {{"i_auroc", i_auroc}, {"p_auroc", p_auroc},   {"p_pro", p_pro},
          {"ap", ap},           {"n_images", n_images}, {"n_defect_images", n_defect_images}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  MetricsReport r;
  r.i_auroc = j.at("i_auroc").get<real>();
  r.p_auroc = j.at("p_auroc").get<real>();
  r.p_pro = j.at("p_pro").get<real>();
  r.ap = j.at("ap").get<real>();
  r.n_images = j.at("n_images").get<int>();
  r.n_defect_images = j.at("n_defect_images").get<int>();
  return r;
}

real auroc(const std::vector<real>& scores, const std::vector<uint8_t>& labels) {
  CFRG_CHECK(scores.size() == labels.size(), "auroc: size mismatch");
  int64_t n_pos = 0, n_neg = 0;
  for (uint8_t l : labels) (l ? n_pos : n_neg)++;
  if (n_pos == 0 || n_neg == 0)
    throw MetricError("auroc undefined: both classes must be present");

  std::vector<size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // average ranks over tie groups, then the Mann-Whitney statistic
  real rank_sum_pos = 0;
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const real avg_rank = (real)(i + 1 + j) / 2.0;  // ranks are 1-based
    for (size_t k = i; k < j; ++k)
      if (labels[idx[k]]) rank_sum_pos += avg_rank;
    i = j;
  }
  return (rank_sum_pos - (real)n_pos * (n_pos + 1) / 2.0) / ((real)n_pos * (real)n_neg);
}

real average_precision(const std::vector<real>& scores, const std::vector<uint8_t>& labels) {
  CFRG_CHECK(scores.size() == labels.size(), "average_precision: size mismatch");
  int64_t n_pos = 0;
  for (uint8_t l : labels) n_pos += l ? 1 : 0;
  if (n_pos == 0) throw MetricError("average_precision undefined: no positive samples");

  std::vector<size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return scores[a] > scores[b]; });

  real ap = 0;
  int64_t tp = 0, seen = 0;
  real prev_recall = 0;
  size_t i = 0;
  while (i < idx.size()) {
    size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    for (size_t k = i; k < j; ++k) {
      tp += labels[idx[k]] ? 1 : 0;
      ++seen;
    }
    const real precision = (real)tp / (real)seen;
    const real recall = (real)tp / (real)n_pos;
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

ComponentLabels connected_components(const Mask& mask) {
  ComponentLabels out;
  out.height = mask.height;
  out.width = mask.width;
  out.labels.assign(mask.data.size(), 0);

  // two-pass labeling with a union-find over provisional labels
  std::vector<int> parent(1, 0);
  auto find = [&](int a) {
    while (parent[(size_t)a] != a) {
      parent[(size_t)a] = parent[(size_t)parent[(size_t)a]];
      a = parent[(size_t)a];
    }
    return a;
  };
  auto unite = [&](int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[(size_t)std::max(a, b)] = std::min(a, b);
  };

  const int h = mask.height, w = mask.width;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!mask.at(y, x)) continue;
      // 8-connectivity: four already-visited neighbors
      int neigh[4] = {0, 0, 0, 0};
      int n_neigh = 0;
      if (x > 0 && mask.at(y, x - 1)) neigh[n_neigh++] = out.labels[(size_t)y * w + x - 1];
      if (y > 0) {
        if (x > 0 && mask.at(y - 1, x - 1)) neigh[n_neigh++] = out.labels[(size_t)(y - 1) * w + x - 1];
        if (mask.at(y - 1, x)) neigh[n_neigh++] = out.labels[(size_t)(y - 1) * w + x];
        if (x + 1 < w && mask.at(y - 1, x + 1)) neigh[n_neigh++] = out.labels[(size_t)(y - 1) * w + x + 1];
      }
      if (n_neigh == 0) {
        const int fresh = (int)parent.size();
        parent.push_back(fresh);
        out.labels[(size_t)y * w + x] = fresh;
      } else {
        int m = neigh[0];
        for (int k = 1; k < n_neigh; ++k) m = std::min(m, neigh[k]);
        out.labels[(size_t)y * w + x] = m;
        for (int k = 0; k < n_neigh; ++k) unite(m, neigh[k]);
      }
    }

  // second pass: compress to dense labels 1..count
  std::vector<int> remap(parent.size(), 0);
  int next = 0;
  for (int& l : out.labels) {
    if (!l) continue;
    const int root = find(l);
    if (!remap[(size_t)root]) remap[(size_t)root] = ++next;
    l = remap[(size_t)root];
  }
  out.count = next;
  return out;
}

real pro_curve(const std::vector<Map2D>& score_maps, const std::vector<Mask>& masks,
               const ProOptions& opts) {
  CFRG_CHECK(score_maps.size() == masks.size(), "pro_curve: set size mismatch");
  CFRG_CHECK(opts.fpr_limit > 0 && opts.fpr_limit <= 1, "pro_curve: bad fpr_limit");

  // flatten pixels: score, region id (-1 for normal pixels), region sizes
  struct Pixel {
    real score;
    int region;  // global region index or -1
  };
  std::vector<Pixel> pixels;
  std::vector<int64_t> region_size;
  int64_t n_normal = 0;

  for (size_t i = 0; i < score_maps.size(); ++i) {
    const Map2D& sm = score_maps[i];
    const Mask& mk = masks[i];
    const bool has_mask = !mk.empty();
    if (has_mask)
      CFRG_CHECK(mk.height == sm.height && mk.width == sm.width, "pro_curve: shape mismatch");
    ComponentLabels cc;
    int base = (int)region_size.size();
    if (has_mask && mk.count_nonzero() > 0) {
      cc = connected_components(mk);
      for (int r = 0; r < cc.count; ++r) region_size.push_back(0);
      for (size_t p = 0; p < cc.labels.size(); ++p)
        if (cc.labels[p]) ++region_size[(size_t)(base + cc.labels[p] - 1)];
    }
    for (size_t p = 0; p < sm.data.size(); ++p) {
      const int lbl = (has_mask && !cc.labels.empty()) ? cc.labels[p] : 0;
      if (lbl)
        pixels.push_back({sm.data[p], base + lbl - 1});
      else {
        pixels.push_back({sm.data[p], -1});
        ++n_normal;
      }
    }
  }

  if (region_size.empty())
    throw MetricError("pro_curve undefined: no defect region in the ground truth");
  if (n_normal == 0) throw MetricError("pro_curve undefined: no normal pixels");

  std::sort(pixels.begin(), pixels.end(),
            [](const Pixel& a, const Pixel& b) { return a.score > b.score; });

  // unique scores descending; optionally capped to quantile thresholds
  std::vector<real> thresholds;
  for (size_t i = 0; i < pixels.size(); ++i)
    if (i == 0 || pixels[i].score != pixels[i - 1].score) thresholds.push_back(pixels[i].score);
  if ((int)thresholds.size() > opts.max_thresholds) {
    std::vector<real> capped;
    capped.reserve((size_t)opts.max_thresholds);
    const size_t n = thresholds.size();
    for (int k = 0; k < opts.max_thresholds; ++k)
      capped.push_back(thresholds[(size_t)((real)k * (n - 1) / (opts.max_thresholds - 1))]);
    capped.erase(std::unique(capped.begin(), capped.end()), capped.end());
    thresholds = std::move(capped);
  }

  // sweep descending; after absorbing all pixels with score >= threshold,
  // record (fpr, mean-pro). Curve starts at (0, 0).
  std::vector<real> fprs{0.0}, pros{0.0};
  const real n_regions = (real)region_size.size();
  real pro_sum = 0;
  int64_t fp = 0;
  size_t cursor = 0;
  for (real th : thresholds) {
    while (cursor < pixels.size() && pixels[cursor].score >= th) {
      const Pixel& px = pixels[cursor];
      if (px.region >= 0)
        pro_sum += 1.0 / (real)region_size[(size_t)px.region];
      else
        ++fp;
      ++cursor;
    }
    fprs.push_back((real)fp / (real)n_normal);
    pros.push_back(pro_sum / n_regions);
  }

  // trapezoidal integral over fpr in [0, limit], interpolating at the cut
  real area = 0;
  for (size_t i = 1; i < fprs.size(); ++i) {
    real x0 = fprs[i - 1], x1 = fprs[i];
    real y0 = pros[i - 1], y1 = pros[i];
    if (x0 >= opts.fpr_limit) break;
    if (x1 > opts.fpr_limit) {
      const real t = (opts.fpr_limit - x0) / (x1 - x0);
      x1 = opts.fpr_limit;
      y1 = y0 + t * (y1 - y0);
    }
    area += 0.5 * (y0 + y1) * (x1 - x0);
  }
  return area / opts.fpr_limit;
}

MetricsReport evaluate_category(const std::vector<EvalPair>& pairs, const ProOptions& opts) {
  CFRG_CHECK(!pairs.empty(), "evaluate_category: empty set");
  MetricsReport report;
  report.n_images = (int)pairs.size();

  std::vector<real> image_scores;
  std::vector<uint8_t> image_labels;
  std::vector<real> pixel_scores;
  std::vector<uint8_t> pixel_labels;
  std::vector<Map2D> maps;
  std::vector<Mask> masks;

  for (const auto& p : pairs) {
    image_scores.push_back(p.image_score);
    image_labels.push_back(p.anomalous ? 1 : 0);
    report.n_defect_images += p.anomalous ? 1 : 0;
    const Mask zero = p.mask.empty() ? Mask(p.pixel_scores.height, p.pixel_scores.width, 0) : p.mask;
    CFRG_CHECK(zero.height == p.pixel_scores.height && zero.width == p.pixel_scores.width,
               "evaluate_category: mask/score shape mismatch");
    for (size_t i = 0; i < p.pixel_scores.data.size(); ++i) {
      pixel_scores.push_back(p.pixel_scores.data[i]);
      pixel_labels.push_back(zero.data[i]);
    }
    maps.push_back(p.pixel_scores);
    masks.push_back(zero);
  }

  try {
    report.i_auroc = auroc(image_scores, image_labels);
    report.p_auroc = auroc(pixel_scores, pixel_labels);
    report.ap = average_precision(pixel_scores, pixel_labels);
    report.p_pro = pro_curve(maps, masks, opts);
  } catch (const MetricError& e) {
    throw MetricError(std::string(e.what()) + " (while evaluating a category of " +
                      std::to_string(pairs.size()) + " images)");
  }
  return report;
}

}  // namespace cfrg
