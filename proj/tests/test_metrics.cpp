#include <doctest.h>

#include <cmath>
#include <map>

#include "cfrg/metrics.hpp"
#include "cfrg/rng.hpp"
#include "metric_oracles.hpp"

using namespace cfrg;

TEST_CASE("auroc fixture values") {
  CHECK(auroc({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == doctest::Approx(1.0));
  CHECK(auroc({0.5, 0.5, 0.5, 0.5}, {1, 0, 1, 0}) == doctest::Approx(0.5));
  CHECK(auroc({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}) == doctest::Approx(0.75));
  CHECK_THROWS_AS(auroc({0.1, 0.2}, {1, 1}), MetricError);
  CHECK_THROWS_AS(auroc({0.1, 0.2}, {0, 0}), MetricError);
}

TEST_CASE("auroc is invariant under strictly monotone transforms") {
  RngStream rng(8);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = (int)rng.uniform_int(4, 200);
    std::vector<real> scores(n);
    std::vector<uint8_t> labels(n);
    for (int i = 0; i < n; ++i) {
      scores[(size_t)i] = rng.uniform(-3, 3);
      labels[(size_t)i] = rng.bernoulli(0.4) ? 1 : 0;
    }
    labels[0] = 1;
    labels[1] = 0;
    std::vector<real> warped(scores.size());
    for (size_t i = 0; i < scores.size(); ++i)
      warped[i] = std::exp(0.7 * scores[i]) + std::atan(scores[i]);
    CHECK(auroc(scores, labels) == doctest::Approx(auroc(warped, labels)).epsilon(1e-12));
  }
}

TEST_CASE("average_precision fixture values") {
  CHECK(average_precision({0.9, 0.8, 0.2, 0.1}, {1, 1, 0, 0}) == doctest::Approx(1.0));
  CHECK(average_precision({0.9, 0.8, 0.7}, {1, 0, 1}) == doctest::Approx(0.8333333333));
  CHECK(average_precision({0.3, 0.6, 0.1}, {1, 1, 1}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(average_precision({0.1, 0.2}, {0, 0}), MetricError);
}

TEST_CASE("auroc and average_precision match the brute-force oracles") {
  RngStream rng(123);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = (int)rng.uniform_int(4, 512);
    std::vector<real> scores(n);
    std::vector<uint8_t> labels(n);
    bool any_pos = false, any_neg = false;
    for (int i = 0; i < n; ++i) {
      // quantized scores so that tie handling is exercised
      scores[(size_t)i] = std::round(rng.uniform(0, 1) * 32.0) / 32.0;
      labels[(size_t)i] = rng.bernoulli(0.35) ? 1 : 0;
      (labels[(size_t)i] ? any_pos : any_neg) = true;
    }
    if (!any_pos) labels[0] = 1;
    if (!any_neg) labels[1] = 0;

    CHECK(std::abs(auroc(scores, labels) - oracle::auroc_bruteforce(scores, labels)) < 1e-9);
    CHECK(std::abs(average_precision(scores, labels) -
                   oracle::average_precision_bruteforce(scores, labels)) < 1e-9);
  }
}

TEST_CASE("connected components: two-pass labeling with 8-connectivity") {
  // diagonal touching merges under 8-connectivity
  Mask m(4, 4, 0);
  m.at(0, 0) = 1;
  m.at(1, 1) = 1;
  m.at(3, 3) = 1;
  ComponentLabels cc = connected_components(m);
  CHECK(cc.count == 2);
  CHECK(cc.labels[0] == cc.labels[5]);
  CHECK(cc.labels[15] != cc.labels[0]);

  // U shape that forces label merging in the second pass
  Mask u(3, 3, 0);
  u.at(0, 0) = 1;
  u.at(1, 0) = 1;
  u.at(2, 0) = 1;
  u.at(2, 1) = 1;
  u.at(2, 2) = 1;
  u.at(1, 2) = 1;
  u.at(0, 2) = 1;
  CHECK(connected_components(u).count == 1);

  CHECK(connected_components(Mask(5, 5, 0)).count == 0);
  CHECK(connected_components(Mask(5, 5, 1)).count == 1);
}

TEST_CASE("connected components agree with flood fill on random masks") {
  RngStream rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    Mask m(12, 12, 0);
    for (uint8_t& v : m.data) v = rng.bernoulli(0.35) ? 1 : 0;
    ComponentLabels cc = connected_components(m);
    int oracle_count = 0;
    std::vector<int> oracle_labels = oracle::label_regions_floodfill(m, &oracle_count);
    REQUIRE(cc.count == oracle_count);
    // same partition up to renaming: bidirectional label correspondence
    std::map<int, int> fwd, bwd;
    for (size_t i = 0; i < m.data.size(); ++i) {
      if (!m.data[i]) {
        CHECK(cc.labels[i] == 0);
        continue;
      }
      auto f = fwd.emplace(cc.labels[i], oracle_labels[i]);
      CHECK(f.first->second == oracle_labels[i]);
      auto b = bwd.emplace(oracle_labels[i], cc.labels[i]);
      CHECK(b.first->second == cc.labels[i]);
    }
  }
}

TEST_CASE("pro_curve fixture behaviors") {
  SUBCASE("predictions equal to the masks score 1.0") {
    Mask m(6, 6, 0);
    for (int y = 1; y < 3; ++y)
      for (int x = 1; x < 4; ++x) m.at(y, x) = 1;
    Map2D s(6, 6, 0.0);
    for (size_t i = 0; i < m.data.size(); ++i) s.data[i] = m.data[i];
    CHECK(pro_curve({s}, {m}) == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("constant maps equal the brute-force oracle value") {
    Mask m(6, 6, 0);
    m.at(2, 2) = 1;
    m.at(2, 3) = 1;
    Map2D s(6, 6, 0.42);
    const real impl = pro_curve({s}, {m});
    const real want = oracle::pro_bruteforce({s}, {m}, 0.3);
    CHECK(impl == doctest::Approx(want).epsilon(1e-12));
    // single threshold step: curve is the segment (0,0)-(1,1), so the
    // integral over [0, 0.3] of y=x is 0.045, normalized 0.15
    CHECK(impl == doctest::Approx(0.15).epsilon(1e-12));
  }

  SUBCASE("two regions of sizes 1 and 9, prediction covering the large one") {
    Mask m(8, 8, 0);
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) m.at(y, x) = 1;  // size 9
    m.at(6, 6) = 1;                                // size 1
    Map2D s(8, 8, 0.0);
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) s.at(y, x) = 1.0;
    // operating point at threshold 1: mean PRO = (9/9 + 0/1) / 2 = 0.5, FPR 0
    // the curve then stays at 0.5 until every pixel turns positive at
    // threshold 0, so the integral over [0, 0.3] is 0.5 (plus the oracle says so)
    const real impl = pro_curve({s}, {m});
    const real want = oracle::pro_bruteforce({s}, {m}, 0.3);
    CHECK(impl == doctest::Approx(want).epsilon(1e-12));
  }

  SUBCASE("undefined without regions or without normal pixels") {
    Map2D s(4, 4, 0.5);
    CHECK_THROWS_AS(pro_curve({s}, {Mask(4, 4, 0)}), MetricError);
    CHECK_THROWS_AS(pro_curve({s}, {Mask(4, 4, 1)}), MetricError);
  }
}

TEST_CASE("pro_curve matches the exhaustive oracle on random sets") {
  RngStream rng(31);
  for (int trial = 0; trial < 120; ++trial) {
    const int n_imgs = (int)rng.uniform_int(1, 3);
    std::vector<Map2D> maps;
    std::vector<Mask> masks;
    bool any_region = false;
    for (int i = 0; i < n_imgs; ++i) {
      Map2D s(8, 8);
      for (real& v : s.data) v = std::round(rng.uniform(0, 1) * 16.0) / 16.0;
      Mask m(8, 8, 0);
      const int blobs = (int)rng.uniform_int(0, 3);
      for (int b = 0; b < blobs; ++b) {
        const int cy = (int)rng.uniform_int(1, 6), cx = (int)rng.uniform_int(1, 6);
        for (int dy = 0; dy <= 1; ++dy)
          for (int dx = 0; dx <= 1; ++dx) m.at(cy + dy, cx + dx) = 1;
      }
      // keep at least one normal pixel per instance mix
      m.at(0, 0) = 0;
      any_region = any_region || m.count_nonzero() > 0;
      maps.push_back(std::move(s));
      masks.push_back(std::move(m));
    }
    if (!any_region) masks[0].at(4, 4) = 1;
    const real impl = pro_curve(maps, masks);
    const real want = oracle::pro_bruteforce(maps, masks, 0.3);
    CHECK(std::abs(impl - want) < 1e-9);
  }
}

TEST_CASE("pro_curve is invariant under image ordering") {
  RngStream rng(9);
  std::vector<Map2D> maps;
  std::vector<Mask> masks;
  for (int i = 0; i < 4; ++i) {
    Map2D s(10, 10);
    for (real& v : s.data) v = rng.uniform(0, 1);
    Mask m(10, 10, 0);
    for (int k = 0; k < 3; ++k) m.at((int)rng.uniform_int(0, 9), (int)rng.uniform_int(0, 9)) = 1;
    maps.push_back(std::move(s));
    masks.push_back(std::move(m));
  }
  const real fwd = pro_curve(maps, masks);
  std::reverse(maps.begin(), maps.end());
  std::reverse(masks.begin(), masks.end());
  CHECK(pro_curve(maps, masks) == doctest::Approx(fwd).epsilon(1e-12));
}

TEST_CASE("evaluate_category assembles all four metrics") {
  // perfectly separable synthetic category
  std::vector<EvalPair> pairs;
  RngStream rng(5);
  for (int i = 0; i < 6; ++i) {
    EvalPair p;
    p.pixel_scores = Map2D(8, 8);
    p.mask = Mask(8, 8, 0);
    p.anomalous = i >= 3;
    if (p.anomalous) {
      for (int y = 2; y < 5; ++y)
        for (int x = 2; x < 5; ++x) {
          p.mask.at(y, x) = 1;
          p.pixel_scores.at(y, x) = 0.9 + 0.001 * i;
        }
    }
    for (int y = 0; y < 8; ++y)
      for (int x = 0; x < 8; ++x)
        if (!p.mask.at(y, x)) p.pixel_scores.at(y, x) = rng.uniform(0.0, 0.1);
    p.image_score = p.anomalous ? 0.9 : 0.1;
    pairs.push_back(std::move(p));
  }
  MetricsReport r = evaluate_category(pairs);
  CHECK(r.i_auroc == doctest::Approx(1.0));
  CHECK(r.p_auroc == doctest::Approx(1.0));
  CHECK(r.p_pro == doctest::Approx(1.0));
  CHECK(r.ap == doctest::Approx(1.0));
  CHECK(r.n_images == 6);
  CHECK(r.n_defect_images == 3);

  SUBCASE("report round-trips through json") {
    MetricsReport back = MetricsReport::from_json(r.to_json());
    CHECK(back.i_auroc == r.i_auroc);
    CHECK(back.p_auroc == r.p_auroc);
    CHECK(back.p_pro == r.p_pro);
    CHECK(back.ap == r.ap);
    CHECK(back.n_images == r.n_images);
    CHECK(back.n_defect_images == r.n_defect_images);
  }

  SUBCASE("metric errors carry category context") {
    std::vector<EvalPair> all_normal;
    EvalPair p;
    p.pixel_scores = Map2D(4, 4, 0.1);
    p.mask = Mask(4, 4, 0);
    p.anomalous = false;
    p.image_score = 0.1;
    all_normal.push_back(p);
    CHECK_THROWS_WITH_AS(evaluate_category(all_normal),
                         doctest::Contains("while evaluating a category"), MetricError);
  }
}
