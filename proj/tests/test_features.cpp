#include <doctest.h>

#include <cmath>

#include "cfrg/backbones.hpp"
#include "cfrg/distill.hpp"
#include "test_support.hpp"

using namespace cfrg;

namespace {

BackboneSpec desk_spec(uint64_t seed = 0) {
  BackboneSpec spec;
  spec.desk_scale = true;
  spec.init_seed = seed;
  return spec;
}

Tensor random_input(int n, int res, uint64_t seed) {
  RngStream rng(seed);
  return Tensor::uniform({n, 3, res, res}, rng, -1.0, 1.0);
}

}  // namespace

TEST_CASE("teacher pyramid has K=3 levels at strides 4/8/16") {
  TeacherNet teacher(desk_spec());
  for (int res : {64, 128, 256}) {
    FeaturePyramid pyr = teacher.forward(random_input(2, res, 1), PyramidSource::teacher_on_xa);
    REQUIRE(pyr.levels.size() == 3);
    const auto ch = teacher.level_channels();
    for (int i = 0; i < 3; ++i) {
      const auto& s = pyr.levels[(size_t)i].shape();
      CHECK(s[0] == 2);
      CHECK(s[1] == ch[(size_t)i]);
      CHECK(s[2] == res / (4 << i));
      CHECK(s[3] == res / (4 << i));
    }
    // spatial sizes strictly decrease
    CHECK(pyr.levels[0].dim(2) > pyr.levels[1].dim(2));
    CHECK(pyr.levels[1].dim(2) > pyr.levels[2].dim(2));
  }
}

TEST_CASE("frozen teacher is deterministic and gradient-free") {
  TeacherNet teacher(desk_spec(3));
  Tensor x = random_input(1, 64, 2);
  FeaturePyramid a = teacher.forward(x, PyramidSource::teacher_on_xa);
  FeaturePyramid b = teacher.forward(x, PyramidSource::teacher_on_xa);
  for (int i = 0; i < 3; ++i) {
    CHECK(a.levels[(size_t)i].data() == b.levels[(size_t)i].data());
    CHECK_FALSE(a.levels[(size_t)i].requires_grad());
  }

  // zero image stays finite
  FeaturePyramid z =
      teacher.forward(Tensor::zeros({1, 3, 64, 64}), PyramidSource::teacher_on_xa);
  for (const auto& level : z.levels)
    for (real v : level.data()) CHECK(std::isfinite(v));
}

TEST_CASE("student aligns level shapes with the teacher and carries gradients") {
  TeacherNet teacher(desk_spec(4));
  StudentNet student(desk_spec(4), teacher.level_channels());
  Tensor x = random_input(2, 64, 5);
  FeaturePyramid tp = teacher.forward(x, PyramidSource::teacher_on_xa);
  FeaturePyramid sp = student.forward(x);
  for (int i = 0; i < 3; ++i) {
    CHECK(sp.levels[(size_t)i].shape() == tp.levels[(size_t)i].shape());
    CHECK(sp.levels[(size_t)i].requires_grad());
  }
}

TEST_CASE("level shape agreement holds for any resolution divisible by 32") {
  TeacherNet teacher(desk_spec(6));
  StudentNet student(desk_spec(6), teacher.level_channels());
  for (int res : {32, 96, 160}) {
    Tensor x = random_input(1, res, 6);
    FeaturePyramid tp = teacher.forward(x, PyramidSource::teacher_on_xa);
    FeaturePyramid sp = student.forward(x);
    for (int i = 0; i < 3; ++i)
      CHECK(sp.levels[(size_t)i].shape() == tp.levels[(size_t)i].shape());
  }
}

TEST_CASE("homogeneous mode uses a fresh teacher architecture") {
  BackboneSpec spec = desk_spec(7);
  TeacherNet teacher(spec);

  BackboneSpec homo = spec;
  homo.homogeneous_mode = true;
  StudentNet homogeneous(homo, teacher.level_channels());
  CHECK(homogeneous.arch() == teacher.arch());

  StudentNet heterogeneous(spec, teacher.level_channels());
  CHECK(heterogeneous.arch() != teacher.arch());

  // heterogeneous student is the smaller one
  CHECK(heterogeneous.parameter_count() < homogeneous.parameter_count());
}

TEST_CASE("teacher weights stay bit-identical through a training step") {
  TeacherNet teacher(desk_spec(8));
  StudentNet student(desk_spec(8), teacher.level_channels());
  const uint64_t before = teacher.weights_hash();

  nn::AdamW opt(student.named_parameters("student."), {});
  Tensor x = random_input(2, 64, 9);
  const std::vector<real> student_probe = student.forward(x).levels[0].data();

  FeaturePyramid tp = teacher.forward(x, PyramidSource::teacher_on_xa);
  FeaturePyramid sp = student.forward(x);
  CosineDistanceMap d = cosine_distance(tp, sp);
  Tensor loss = distill_loss(d, std::vector<Mask>(2), {});
  opt.zero_grad();
  loss.backward();
  opt.step();

  CHECK(teacher.weights_hash() == before);

  // gradient liveness: student outputs move after the step
  const std::vector<real> after = student.forward(x).levels[0].data();
  real delta = 0;
  for (size_t i = 0; i < after.size(); ++i) delta += std::abs(after[i] - student_probe[i]);
  CHECK(delta > 0);
}

TEST_CASE("full-scale teacher without weight files names the expected file") {
  test::TempDir tmp("weights");
  BackboneSpec spec;
  spec.desk_scale = false;
  spec.weights_dir = tmp.path();
  try {
    TeacherNet teacher(spec);
    FAIL("expected DataError");
  } catch (const DataError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("wide-resnet-50.cfrgt") != std::string::npos);
  }
}

TEST_CASE("full-scale backbones satisfy the level contract when permitted") {
  // random-init escape hatch; 64px keeps the graph small
  BackboneSpec spec;
  spec.allow_random_teacher = true;
  spec.student_pretrained = false;
  spec.init_seed = 10;
  TeacherNet teacher(spec);
  CHECK(teacher.level_channels() == std::array<int, 3>{256, 512, 1024});
  FeaturePyramid tp = teacher.forward(random_input(1, 64, 11), PyramidSource::teacher_on_xa);
  CHECK(tp.levels[0].shape() == std::vector<int>{1, 256, 16, 16});
  CHECK(tp.levels[1].shape() == std::vector<int>{1, 512, 8, 8});
  CHECK(tp.levels[2].shape() == std::vector<int>{1, 1024, 4, 4});

  StudentNet student(spec, teacher.level_channels());
  FeaturePyramid sp = student.forward(random_input(1, 64, 12));
  for (int i = 0; i < 3; ++i)
    CHECK(sp.levels[(size_t)i].shape() == tp.levels[(size_t)i].shape());

  // efficientnet trunk plus projections is far smaller than a wide resnet
  BackboneSpec homo = spec;
  homo.homogeneous_mode = true;
  StudentNet homogeneous(homo, teacher.level_channels());
  CHECK(student.parameter_count() < homogeneous.parameter_count());
}
