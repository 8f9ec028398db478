#include <doctest.h>

#include <cmath>

#include "cfrg/image.hpp"
#include "test_support.hpp"

using namespace cfrg;

TEST_CASE("bilinear resize of a constant image is constant") {
  Image img(17, 23, 3, 0.37);
  Image out = resize_bilinear(img, 8, 8);
  for (real v : out.data) CHECK(v == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("nearest-neighbor mask resize stays binary") {
  // 4x4 checkerboard downsized: output must contain only 0/1
  Mask checker(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) checker.at(y, x) = (uint8_t)((y + x) % 2);
  for (auto [h, w] : {std::pair{2, 2}, std::pair{3, 3}, std::pair{7, 5}}) {
    Mask out = resize_nearest(checker, h, w);
    for (uint8_t v : out.data) CHECK((v == 0 || v == 1));
  }

  // independent oracle: with half-pixel centers a 2x downsize samples source
  // pixels (1,1), (1,3), (3,1), (3,3); the checkerboard hits even parity at
  // all four, and a top-left block pattern keeps exactly one sample
  Mask two = resize_nearest(checker, 2, 2);
  CHECK(two.at(0, 0) == 0);
  CHECK(two.at(0, 1) == 0);
  CHECK(two.at(1, 0) == 0);
  CHECK(two.at(1, 1) == 0);

  Mask corner(4, 4, 0);
  for (int y = 0; y < 2; ++y)
    for (int x = 0; x < 2; ++x) corner.at(y, x) = 1;
  Mask c2 = resize_nearest(corner, 2, 2);
  CHECK(c2.at(0, 0) == 1);
  CHECK(c2.at(0, 1) == 0);
  CHECK(c2.at(1, 0) == 0);
  CHECK(c2.at(1, 1) == 0);

  // all-zeros mask resizes to all-zeros
  Mask zeros(512, 512, 0);
  Mask small = resize_nearest(zeros, 256, 256);
  CHECK(small.count_nonzero() == 0);
}

TEST_CASE("rotation by zero degrees is identity away from the border") {
  Map2D m(9, 9);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) m.at(y, x) = 0.1 * y + 0.01 * x;
  Map2D r = rotate(m, 0.0);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x) CHECK(r.at(y, x) == doctest::Approx(m.at(y, x)).epsilon(1e-12));
}

TEST_CASE("gaussian impulse response peaks at 1/(2*pi*sigma^2)") {
  const real sigma = 4.0;
  Map2D impulse(129, 129, 0.0);
  impulse.at(64, 64) = 1.0;
  Map2D blurred = gaussian_blur(impulse, sigma);
  const real expected = 1.0 / (2.0 * M_PI * sigma * sigma);
  CHECK(std::abs(blurred.at(64, 64) - expected) < 1e-4);

  // mass preserved for interior impulses
  real mass = 0;
  for (real v : blurred.data) mass += v;
  CHECK(std::abs(mass - 1.0) < 1e-3);
}

TEST_CASE("gaussian blur is shift-equivariant on interior impulses") {
  const real sigma = 2.0;
  Map2D a(64, 64, 0.0), b(64, 64, 0.0);
  a.at(30, 30) = 1.0;
  b.at(33, 35) = 1.0;
  Map2D ba = gaussian_blur(a, sigma);
  Map2D bb = gaussian_blur(b, sigma);
  for (int dy = -8; dy <= 8; ++dy)
    for (int dx = -8; dx <= 8; ++dx)
      CHECK(ba.at(30 + dy, 30 + dx) == doctest::Approx(bb.at(33 + dy, 35 + dx)).epsilon(1e-12));
}

TEST_CASE("image io round trip through png") {
  test::TempDir tmp("imageio");
  Image img(10, 12, 3);
  RngStream rng(3);
  for (real& v : img.data) v = std::round(rng.uniform(0.0, 1.0) * 255.0) / 255.0;
  write_image(tmp.path() / "a.png", img);
  Image back = read_image(tmp.path() / "a.png");
  REQUIRE(back.height == 10);
  REQUIRE(back.width == 12);
  for (size_t i = 0; i < img.data.size(); ++i)
    CHECK(back.data[i] == doctest::Approx(img.data[i]).epsilon(1e-9));

  CHECK_THROWS_AS(read_image(tmp.path() / "missing.png"), DataError);
}
