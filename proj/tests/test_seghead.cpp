#include <doctest.h>

#include <cmath>

#include "cfrg/seghead.hpp"
#include "test_support.hpp"

using namespace cfrg;

namespace {

FeaturePyramid levels_of(const std::vector<Tensor>& ts) {
  FeaturePyramid p;
  p.levels = ts;
  return p;
}

std::vector<Tensor> const_weights(int n, const std::vector<std::pair<int, int>>& sizes, real v) {
  std::vector<Tensor> out;
  for (auto [h, w] : sizes) out.push_back(Tensor::full({n, 1, h, w}, v));
  return out;
}

}  // namespace

TEST_CASE("guide weighting arithmetic") {
  RngStream rng(1);
  FeaturePyramid feats = levels_of({Tensor::randn({1, 4, 8, 8}, rng),
                                    Tensor::randn({1, 4, 4, 4}, rng),
                                    Tensor::randn({1, 4, 2, 2}, rng)});
  const std::vector<std::pair<int, int>> sizes{{8, 8}, {4, 4}, {2, 2}};

  SUBCASE("w == 1 everywhere blocks all evidence") {
    GuidedFeatures g = guide(feats, const_weights(1, sizes, 1.0), const_weights(1, sizes, 1.0));
    for (const auto& lvl : g.in_s)
      for (real v : lvl.data()) CHECK(v == 0.0);
  }
  SUBCASE("w == 0 everywhere passes the teacher features through") {
    GuidedFeatures g = guide(feats, const_weights(1, sizes, 0.0), const_weights(1, sizes, 0.0));
    for (int i = 0; i < 3; ++i) CHECK(g.in_s[(size_t)i].data() == feats.levels[(size_t)i].data());
  }
  SUBCASE("w_d = w_r = 0.5 quarters a feature of 4") {
    FeaturePyramid fours = levels_of({Tensor::full({1, 4, 8, 8}, 4.0),
                                      Tensor::full({1, 4, 4, 4}, 4.0),
                                      Tensor::full({1, 4, 2, 2}, 4.0)});
    GuidedFeatures g = guide(fours, const_weights(1, sizes, 0.5), const_weights(1, sizes, 0.5));
    for (const auto& lvl : g.in_s)
      for (real v : lvl.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
    for (const auto& lvl : g.in_t)
      for (real v : lvl.data()) CHECK(v == doctest::Approx(2.0).epsilon(1e-12));
  }
  SUBCASE("hint bypass uses in_t as in_s") {
    GuidedFeatures g =
        guide(feats, const_weights(1, sizes, 0.3), {}, /*hint_enabled=*/false);
    for (int i = 0; i < 3; ++i) CHECK(g.in_s[(size_t)i].data() == g.in_t[(size_t)i].data());
  }
  SUBCASE("guide is exactly multiplicative: doubling features doubles in_t") {
    auto w = const_weights(1, sizes, 0.25);
    GuidedFeatures g1 = guide(feats, w, w);
    FeaturePyramid doubled =
        levels_of({ops::scale(feats.levels[0], 2.0), ops::scale(feats.levels[1], 2.0),
                   ops::scale(feats.levels[2], 2.0)});
    GuidedFeatures g2 = guide(doubled, w, w);
    for (int i = 0; i < 3; ++i)
      for (size_t k = 0; k < g1.in_t[(size_t)i].data().size(); ++k)
        CHECK(g2.in_t[(size_t)i].data()[k] ==
              doctest::Approx(2.0 * g1.in_t[(size_t)i].data()[k]).epsilon(1e-12));
  }
  SUBCASE("shape mismatch is an error") {
    CHECK_THROWS_AS(guide(feats, const_weights(1, {{4, 4}, {4, 4}, {2, 2}}, 0.5),
                          const_weights(1, sizes, 0.5)),
                    DataError);
  }
}

TEST_CASE("segmentation net emits full-resolution maps") {
  RngStream init(2);
  SegmentationNet net({8, 12, 20}, 16, init);
  net.set_training(false);
  RngStream rng(3);
  std::vector<Tensor> in_s = {Tensor::randn({2, 8, 16, 16}, rng),
                              Tensor::randn({2, 12, 8, 8}, rng),
                              Tensor::randn({2, 20, 4, 4}, rng)};
  SegOutput out = net.forward(in_s, 64, 64);
  CHECK(out.logits.shape() == std::vector<int>{2, 1, 64, 64});
  CHECK(out.probs.shape() == std::vector<int>{2, 1, 64, 64});
  for (real v : out.probs.data()) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("all-zero guided input yields constant interior logits") {
  RngStream init(4);
  SegmentationNet net({4, 6, 8}, 8, init);
  net.set_training(false);
  std::vector<Tensor> zeros = {Tensor::zeros({1, 4, 16, 16}), Tensor::zeros({1, 6, 8, 8}),
                               Tensor::zeros({1, 8, 4, 4})};
  SegOutput out = net.forward(zeros, 64, 64);
  const auto& s = out.logits.shape();
  const int h = s[2], w = s[3];
  const int margin = h / 4;
  const real ref = out.logits.data()[(size_t)(h / 2) * w + (w / 2)];
  for (int y = margin; y < h - margin; ++y)
    for (int x = margin; x < w - margin; ++x)
      CHECK(out.logits.data()[(size_t)y * w + x] == doctest::Approx(ref).epsilon(1e-9));
}

TEST_CASE("gradients flow to segmentation parameters and through in_s") {
  RngStream init(5);
  SegmentationNet net({4, 6, 8}, 8, init);
  RngStream rng(6);
  // in_s built from differentiable "student-side" weights
  Tensor wd1 = Tensor::uniform({1, 1, 16, 16}, rng, 0.2, 0.8, true);
  Tensor wd2 = Tensor::uniform({1, 1, 8, 8}, rng, 0.2, 0.8, true);
  Tensor wd3 = Tensor::uniform({1, 1, 4, 4}, rng, 0.2, 0.8, true);
  FeaturePyramid feats = levels_of({Tensor::randn({1, 4, 16, 16}, rng),
                                    Tensor::randn({1, 6, 8, 8}, rng),
                                    Tensor::randn({1, 8, 4, 4}, rng)});
  GuidedFeatures g = guide(feats, {wd1, wd2, wd3}, {}, /*hint_enabled=*/false);
  SegOutput out = net.forward(g.in_s, 64, 64);
  Tensor loss = bce_loss(out.probs, {Mask(64, 64, 1)});
  loss.backward();

  bool seg_grads = false;
  for (auto& [name, p] : net.named_parameters()) {
    Tensor t = p;
    if (t.has_grad())
      for (real gv : t.grad()) seg_grads = seg_grads || gv != 0.0;
  }
  CHECK(seg_grads);
  REQUIRE(wd1.has_grad());
  bool hint_grads = false;
  for (real gv : wd1.grad()) hint_grads = hint_grads || gv != 0.0;
  CHECK(hint_grads);
}

TEST_CASE("bce_loss fixture values") {
  SUBCASE("S == 0.5 gives ln 2 regardless of G") {
    Tensor s = Tensor::full({1, 1, 4, 4}, 0.5);
    CHECK(bce_loss(s, {Mask(4, 4, 0)}).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(bce_loss(s, {Mask(4, 4, 1)}).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("S == G is (numerically) zero") {
    Tensor s = Tensor::zeros({1, 1, 2, 2});
    Mask g(2, 2, 0);
    s.data() = {1.0, 0.0, 0.0, 1.0};
    g.at(0, 0) = 1;
    g.at(1, 1) = 1;
    CHECK(bce_loss(s, {g}).item() == doctest::Approx(0.0).epsilon(1e-5));
  }
  SUBCASE("2x2 hand-computed case") {
    Tensor s = Tensor::from_data({1, 1, 2, 2}, {0.9, 0.1, 0.8, 0.2});
    Mask g(2, 2, 0);
    g.at(0, 0) = 1;
    g.at(1, 0) = 1;
    const real want = -(std::log(0.9) + std::log(0.9) + std::log(0.8) + std::log(0.8)) / 4.0;
    CHECK(bce_loss(s, {g}).item() == doctest::Approx(want).epsilon(1e-9));
    CHECK(bce_loss(s, {g}).item() == doctest::Approx(0.16425).epsilon(1e-3));
  }
}

TEST_CASE("bce_loss equals a scalar brute-force loop on random instances") {
  RngStream rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    Tensor s = Tensor::uniform({2, 1, 8, 8}, rng, 0.01, 0.99);
    std::vector<Mask> masks;
    for (int n = 0; n < 2; ++n) {
      Mask m(8, 8, 0);
      for (uint8_t& v : m.data) v = rng.bernoulli(0.3) ? 1 : 0;
      masks.push_back(std::move(m));
    }
    real brute = 0;
    for (int n = 0; n < 2; ++n)
      for (int i = 0; i < 64; ++i) {
        const real p = s.data()[(size_t)(n * 64 + i)];
        const real t = masks[(size_t)n].data[(size_t)i];
        brute += -(t * std::log(p) + (1 - t) * std::log(1 - p));
      }
    brute /= 128.0;
    CHECK(std::abs(bce_loss(s, masks).item() - brute) < 1e-6);
  }
}

TEST_CASE("bce_loss gradient matches finite differences") {
  RngStream rng(8);
  Tensor s = Tensor::uniform({1, 1, 4, 4}, rng, 0.05, 0.95);
  Mask g(4, 4, 0);
  g.at(1, 2) = 1;
  g.at(3, 3) = 1;

  s.set_requires_grad(true);
  bce_loss(s, {g}).backward();
  auto eval = [&]() {
    NoGradGuard guard;
    return bce_loss(s, {g}).item();
  };
  auto fd = test::finite_difference_grad(eval, s);
  CHECK(test::max_rel_error(s.grad(), fd) < 1e-6);
}

TEST_CASE("total_loss combination") {
  Tensor a = Tensor::scalar(0.5), b = Tensor::scalar(0.3), c = Tensor::scalar(0.2);

  SUBCASE("unit weights sum the components") {
    CHECK(total_loss(a, b, c, {}).item() == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("the loss-weight study row (1, 1/10, 1)") {
    LossWeights w{1.0, 0.1, 1.0};
    CHECK(total_loss(a, b, c, w).item() == doctest::Approx(0.5 + 0.03 + 0.2).epsilon(1e-12));
  }
  SUBCASE("a zero weight removes that component's gradient entirely") {
    Tensor dis = Tensor::scalar(0.5, true);
    Tensor rec = Tensor::scalar(0.3, true);
    LossWeights w{1.0, 0.0, 1.0};
    total_loss(dis, rec, c, w).backward();
    CHECK(dis.grad()[0] == doctest::Approx(1.0));
    CHECK(rec.grad()[0] == doctest::Approx(0.0));
  }
  SUBCASE("NaN components abort with diagnostics") {
    Tensor bad = Tensor::scalar(std::nan(""));
    CHECK_THROWS_WITH_AS(total_loss(a, bad, c, {}), doctest::Contains("L_rec"), NumericError);
  }
  SUBCASE("undefined components act as zero terms") {
    CHECK(total_loss(a, Tensor(), Tensor(), {}).item() == doctest::Approx(0.5));
  }
}
