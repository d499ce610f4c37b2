#include <cmath>

#include "common.hpp"
#include "doctest.h"
#include "image.hpp"
#include "oracles.hpp"

using gusl::ErrorKind;
using gusl::Image;

namespace {

ErrorKind kind_of(auto&& f) {
  try {
    f();
  } catch (const gusl::Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Io;
}

}  // namespace

TEST_CASE("downsample averages 2x2 blocks") {
  CHECK(gusl::downsample_mean(Image(2, 2, {1, 2, 3, 4})) == Image(1, 1, {2.5}));
  const Image c = gusl::downsample_mean(Image(6, 10, 0.3));
  CHECK(c.height() == 3);
  CHECK(c.width() == 5);
  for (double v : c.pixels()) CHECK(v == doctest::Approx(0.3).epsilon(1e-15));
}

TEST_CASE("downsample of odd sizes averages partial blocks") {
  const Image d = gusl::downsample_mean(Image(3, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
  // (1+2+4+5)/4, (3+6)/2, (7+8)/2, 9
  CHECK(d == Image(2, 2, {3.0, 4.5, 7.5, 9.0}));
}

TEST_CASE("downsample keeps the mean of even-sized images") {
  const Image img = oracle::random_image(16, 12, 3);
  const Image d = gusl::downsample_mean(img);
  double a = 0, b = 0;
  for (double v : img.pixels()) a += v;
  for (double v : d.pixels()) b += v;
  CHECK(a / img.size() == doctest::Approx(b / d.size()).epsilon(1e-12));
}

TEST_CASE("downsample rejects tiny images") {
  CHECK(kind_of([] { gusl::downsample_mean(Image(1, 4, 0.0)); }) == ErrorKind::InvalidDimension);
}

TEST_CASE("upscale uses half-pixel bilinear sampling") {
  // Source coordinate (i + 0.5) * 2 / 4 - 0.5, clamped: -0.25, 0.25, 0.75, 1.25.
  const Image up = gusl::upscale(Image(1, 2, {0.0, 1.0}), 1, 4);
  CHECK(up.at(0, 0) == 0.0);
  CHECK(up.at(0, 1) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(up.at(0, 2) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(up.at(0, 3) == 1.0);
}

TEST_CASE("upscale of constants and monotone columns") {
  const Image c = gusl::upscale(Image(2, 2, 0.5), 4, 4);
  for (double v : c.pixels()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));
  const Image col = gusl::upscale(Image(2, 1, {0.0, 1.0}), 4, 1);
  CHECK(col.at(0, 0) == 0.0);
  CHECK(col.at(3, 0) == 1.0);
  for (size_t i = 1; i < 4; ++i) CHECK(col.at(i, 0) >= col.at(i - 1, 0));
}

TEST_CASE("upscale stays within the input range") {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    const Image img = oracle::random_image(5 + seed % 3, 7, seed);
    const Image up = gusl::upscale(img, 10 + seed % 3, 13);
    const auto [lo, hi] = std::minmax_element(img.pixels().begin(), img.pixels().end());
    for (double v : up.pixels()) {
      CHECK(v >= *lo - 1e-15);
      CHECK(v <= *hi + 1e-15);
    }
  }
}

TEST_CASE("upscale rejects shrinking") {
  CHECK(kind_of([] { gusl::upscale(Image(4, 4, 0.0), 2, 8); }) == ErrorKind::InvalidDimension);
}

TEST_CASE("pyramid dimensions halve with ceil") {
  const auto p = gusl::build_pyramid(Image(100, 64, 0.1), 3);
  REQUIRE(p.level_count() == 3);
  CHECK(p.levels[1].height() == 50);
  CHECK(p.levels[1].width() == 32);
  CHECK(p.levels[2].height() == 25);
  CHECK(p.levels[2].width() == 16);
  const auto q = gusl::build_pyramid(Image(512, 512, 0.0), 4);
  CHECK(q.levels[3].height() == 64);
  const Image img = oracle::random_image(20, 20, 1);
  const auto two = gusl::build_pyramid(img, 2);
  CHECK(two.levels[0] == img);
  CHECK(two.levels[1] == gusl::downsample_mean(img));
}

TEST_CASE("pyramid refuses levels below 8x8") {
  CHECK(kind_of([] { gusl::build_pyramid(Image(32, 32, 0.0), 4); }) == ErrorKind::InvalidConfig);
  CHECK(kind_of([] { gusl::build_pyramid(Image(32, 32, 0.0), 1); }) == ErrorKind::InvalidConfig);
  CHECK_NOTHROW(gusl::build_pyramid(Image(32, 32, 0.0), 3));
}

TEST_CASE("compose adds the residual and clips") {
  CHECK(gusl::compose_prediction(Image(1, 1, {1.0}), Image(1, 1, {0.0}), true) == Image(1, 1, {1.0}));
  CHECK(gusl::compose_prediction(Image(1, 1, {0.4}), Image(1, 1, {0.1}), true).at(0, 0) ==
        doctest::Approx(0.5).epsilon(1e-15));
  CHECK(gusl::compose_prediction(Image(1, 1, {0.95}), Image(1, 1, {0.2}), true) == Image(1, 1, {1.0}));
  CHECK(gusl::compose_prediction(Image(1, 1, {0.95}), Image(1, 1, {0.2}), false).at(0, 0) ==
        doctest::Approx(1.15).epsilon(1e-15));
  CHECK(kind_of([] { gusl::compose_prediction(Image(1, 2, 0.0), Image(2, 1, 0.0), true); }) == ErrorKind::Shape);
}

TEST_CASE("psnr values and errors") {
  CHECK(gusl::psnr(Image(4, 4, 0.0), Image(4, 4, 1.0), 1.0) == doctest::Approx(0.0));
  // MSE 1 at peak 255 is 20 log10(255).
  CHECK(gusl::psnr(Image(2, 2, 0.0), Image(2, 2, 1.0), 255.0) == doctest::Approx(20 * std::log10(255.0)));
  CHECK(std::abs(gusl::psnr(Image(2, 2, 0.0), Image(2, 2, 1.0), 255.0) - 48.1308) < 1e-3);
  const Image a = oracle::random_image(8, 8, 1);
  CHECK(kind_of([&] { gusl::psnr(a, a); }) == ErrorKind::IdenticalImages);
  const Image b = oracle::random_image(8, 8, 2);
  CHECK(gusl::psnr(a, b) == gusl::psnr(b, a));
}

TEST_CASE("psnr decreases as error grows") {
  const Image ref(8, 8, 0.5);
  double last = std::numeric_limits<double>::infinity();
  for (double d : {0.01, 0.02, 0.05, 0.1, 0.3}) {
    const double p = gusl::psnr(ref, Image(8, 8, 0.5 + d));
    CHECK(p < last);
    last = p;
  }
}

TEST_CASE("ssim identities") {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    const Image a = oracle::random_image(16, 20, seed);
    CHECK(std::abs(gusl::ssim(a, a) - 1.0) < 1e-9);
    const Image b = oracle::random_image(16, 20, seed + 100);
    CHECK(std::abs(gusl::ssim(a, b) - gusl::ssim(b, a)) < 1e-9);
  }
  CHECK(std::abs(gusl::ssim(Image(12, 12, 0.5), Image(12, 12, 0.5)) - 1.0) < 1e-12);
}

TEST_CASE("ssim of constant 0 against constant 1") {
  // Means 0 and 1, zero variances: (C1)(C2) / ((1 + C1)(C2)) = C1 / (1 + C1).
  const double c1 = 1e-4;
  CHECK(gusl::ssim(Image(11, 11, 0.0), Image(11, 11, 1.0)) == doctest::Approx(c1 / (1 + c1)).epsilon(1e-12));
}

TEST_CASE("ssim matches a direct window evaluation") {
  for (uint64_t seed = 0; seed < 3; ++seed) {
    const Image a = oracle::random_image(14, 17, seed);
    Image b = a;
    for (double& v : b.pixels()) v = std::clamp(v * 0.8 + 0.1, 0.0, 1.0);
    CHECK(gusl::ssim(a, b) == doctest::Approx(oracle::ssim(a, b)).epsilon(1e-10));
  }
}

TEST_CASE("ssim rejects small images") {
  CHECK(kind_of([] { gusl::ssim(Image(10, 20, 0.0), Image(10, 20, 0.0)); }) == ErrorKind::InvalidDimension);
}

TEST_CASE("reflect index mirrors without repeating the edge") {
  CHECK(gusl::reflect_index(-1, 5) == 1);
  CHECK(gusl::reflect_index(-2, 5) == 2);
  CHECK(gusl::reflect_index(5, 5) == 3);
  CHECK(gusl::reflect_index(6, 5) == 2);
  CHECK(gusl::reflect_index(13, 5) == 3);
  CHECK(gusl::reflect_index(3, 1) == 0);
}
