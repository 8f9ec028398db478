#include <doctest.h>

#include <cmath>

#include "cfrg/recovery.hpp"
#include "test_support.hpp"

using namespace cfrg;

namespace {

FeaturePyramid teacher_like(int n, const std::array<int, 3>& ch, int base, RngStream& rng,
                            PyramidSource src = PyramidSource::teacher_on_xa) {
  FeaturePyramid p;
  p.levels = {Tensor::randn({n, ch[0], base, base}, rng),
              Tensor::randn({n, ch[1], base / 2, base / 2}, rng),
              Tensor::randn({n, ch[2], base / 4, base / 4}, rng)};
  p.source = src;
  return p;
}

}  // namespace

TEST_CASE("recover preserves the level shape contract") {
  RngStream rng(1);
  const std::array<int, 3> ch{16, 32, 64};
  RngStream init(2);
  RecoveryNet net(ch, init);
  net.set_training(false);

  FeaturePyramid in = teacher_like(2, ch, 16, rng);
  FeaturePyramid out = net.forward(in);
  REQUIRE(out.levels.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(out.levels[(size_t)i].shape() == in.levels[(size_t)i].shape());
  CHECK(out.source == PyramidSource::recovery);
  for (const auto& lvl : out.levels)
    for (real v : lvl.data()) CHECK(std::isfinite(v));
}

TEST_CASE("recover is deterministic and does not mutate its input") {
  RngStream rng(3);
  const std::array<int, 3> ch{8, 12, 20};
  RngStream init(4);
  RecoveryNet net(ch, init);
  net.set_training(false);

  FeaturePyramid in = teacher_like(1, ch, 8, rng);
  const auto snapshot = in.levels[0].data();
  FeaturePyramid a = net.forward(in);
  FeaturePyramid b = net.forward(in);
  for (int i = 0; i < 3; ++i) CHECK(a.levels[(size_t)i].data() == b.levels[(size_t)i].data());
  CHECK(in.levels[0].data() == snapshot);
}

TEST_CASE("gradients reach the decoder but not the teacher pyramid") {
  RngStream rng(5);
  const std::array<int, 3> ch{8, 12, 20};
  RngStream init(6);
  RecoveryNet net(ch, init);

  FeaturePyramid in = teacher_like(1, ch, 8, rng);   // leaves without grad
  FeaturePyramid target = teacher_like(1, ch, 8, rng, PyramidSource::teacher_on_xn);
  FeaturePyramid out = net.forward(in);
  Tensor loss = recovery_loss(out, target);
  loss.backward();

  bool any_param_grad = false;
  for (auto& [name, p] : net.named_parameters()) {
    Tensor t = p;
    if (t.has_grad())
      for (real g : t.grad()) any_param_grad = any_param_grad || g != 0.0;
  }
  CHECK(any_param_grad);
  for (const auto& lvl : in.levels) CHECK_FALSE(lvl.has_grad());
}

TEST_CASE("recovery_loss fixture values") {
  RngStream rng(7);
  const std::array<int, 3> ch{4, 6, 8};
  FeaturePyramid a = teacher_like(1, ch, 8, rng, PyramidSource::recovery);

  SUBCASE("identical pyramids give zero") {
    CHECK(recovery_loss(a, a).item() == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("orthogonal channel vectors everywhere give 3.0") {
    // two-channel one-hot patterns: (1,0) vs (0,1) at every pixel
    auto onehot = [](int n, int h, int which) {
      Tensor t = Tensor::zeros({n, 2, h, h});
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < h; ++x) t.data()[offset4(t.shape(), 0, which, y, x)] = 1.0;
      return t;
    };
    FeaturePyramid u, v;
    u.levels = {onehot(1, 8, 0), onehot(1, 4, 0), onehot(1, 2, 0)};
    v.levels = {onehot(1, 8, 1), onehot(1, 4, 1), onehot(1, 2, 1)};
    CHECK(recovery_loss(u, v).item() == doctest::Approx(3.0).epsilon(1e-12));
  }

  SUBCASE("mismatched source ids are rejected") {
    FeaturePyramid b = a;
    a.source_ids = {"cat/train/good/000"};
    b.source_ids = {"cat/train/good/001"};
    CHECK_THROWS_AS(recovery_loss(a, b), DataError);
  }
}

TEST_CASE("recovery_loss gradient matches finite differences") {
  RngStream rng(11);
  Tensor r1 = Tensor::uniform({1, 3, 4, 4}, rng, -1, 1);
  Tensor r2 = Tensor::uniform({1, 3, 2, 2}, rng, -1, 1);
  Tensor r3 = Tensor::uniform({1, 3, 1, 1}, rng, -1, 1);
  Tensor t1 = Tensor::uniform({1, 3, 4, 4}, rng, -1, 1);
  Tensor t2 = Tensor::uniform({1, 3, 2, 2}, rng, -1, 1);
  Tensor t3 = Tensor::uniform({1, 3, 1, 1}, rng, -1, 1);

  auto loss_of = [&]() {
    FeaturePyramid r, t;
    r.levels = {r1, r2, r3};
    t.levels = {t1, t2, t3};
    return recovery_loss(r, t);
  };

  r1.set_requires_grad(true);
  loss_of().backward();
  auto eval = [&]() {
    NoGradGuard guard;
    return loss_of().item();
  };
  auto fd = test::finite_difference_grad(eval, r1);
  CHECK(test::max_rel_error(r1.grad(), fd) < 1e-3);
}

TEST_CASE("recovery_weight mapping") {
  RngStream rng(13);
  const std::array<int, 3> ch{4, 6, 8};
  FeaturePyramid in = teacher_like(1, ch, 8, rng);

  SUBCASE("identical pyramids give weight 1 and hint 0") {
    auto w = recovery_weight(in, in);
    for (const auto& lvl : w)
      for (real v : lvl.data()) CHECK(v == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("flipped feature signs give hint 1") {
    FeaturePyramid neg;
    for (const auto& lvl : in.levels) neg.levels.push_back(ops::scale(lvl, -1.0));
    auto w = recovery_weight(in, neg);
    for (const auto& lvl : w)
      for (real v : lvl.data()) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));
  }

  SUBCASE("60-degree vectors give hint 0.5") {
    // cos 60 = 0.5 -> distance 0.5 -> w_r = 0.5
    Tensor a1 = Tensor::from_data({1, 2, 1, 1}, {1.0, 0.0});
    Tensor b1 = Tensor::from_data({1, 2, 1, 1}, {0.5, std::sqrt(3.0) / 2.0});
    FeaturePyramid pa, pb;
    pa.levels = {a1, a1, a1};
    pb.levels = {b1, b1, b1};
    auto w = recovery_weight(pa, pb);
    for (const auto& lvl : w) CHECK(lvl.data()[0] == doctest::Approx(0.5).epsilon(1e-12));
  }
}

TEST_CASE("recovery loss decreases under optimization on clean pairs") {
  RngStream rng(17);
  const std::array<int, 3> ch{8, 12, 20};
  RngStream init(18);
  RecoveryNet net(ch, init);
  net.set_training(true);

  FeaturePyramid in = teacher_like(2, ch, 8, rng, PyramidSource::teacher_on_xn);
  nn::AdamW::Options oo;
  oo.lr = 2e-3;
  nn::AdamW opt(net.named_parameters(), oo);

  real first = 0, last = 0;
  for (int step = 0; step < 30; ++step) {
    Tensor loss = recovery_loss(net.forward(in), in);
    CHECK(std::isfinite(loss.item()));
    if (step == 0) first = loss.item();
    last = loss.item();
    opt.zero_grad();
    loss.backward();
    opt.step();
  }
  CHECK(last < first);
}
