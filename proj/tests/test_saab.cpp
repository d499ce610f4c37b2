#include <cmath>
#include <random>

#include "common.hpp"
#include "doctest.h"
#include "features.hpp"
#include "oracles.hpp"

using gusl::ErrorKind;
using gusl::FeatureSource;
using gusl::Image;

namespace {

gusl::PatchSet random_patches(int window, size_t count, uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  gusl::PatchSet p;
  p.window = window;
  p.values.resize(count * window * window);
  // Correlated pixels so the covariance has a distinct spectrum.
  for (size_t i = 0; i < count; ++i) {
    const double a = n(gen), b = n(gen);
    for (int j = 0; j < window * window; ++j)
      p.values[i * window * window + j] = 0.5 + a * std::sin(j * 0.7) + b * 0.3 * (j % window) + 0.2 * n(gen);
  }
  return p;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

TEST_CASE("saab kernels are orthonormal with a fixed DC row") {
  for (int w : {3, 5, 7}) {
    const auto k = gusl::fit_saab(random_patches(w, 4 * w * w, w));
    REQUIRE(k.count == static_cast<size_t>(w * w));
    for (double v : k.kernel(0)) CHECK(v == doctest::Approx(1.0 / w).epsilon(1e-15));
    for (size_t a = 0; a < k.count; ++a)
      for (size_t b = 0; b < k.count; ++b) CHECK(std::abs(dot(k.kernel(a), k.kernel(b)) - (a == b)) < 1e-9);
    for (size_t c = 2; c < k.count; ++c) CHECK(k.energies[c] <= k.energies[c - 1] + 1e-12);
    CHECK_FALSE(k.degenerate);
  }
}

TEST_CASE("saab sign convention: largest magnitude entry is positive") {
  const auto k = gusl::fit_saab(random_patches(5, 200, 9));
  for (size_t c = 1; c < k.count; ++c) {
    auto v = k.kernel(c);
    size_t arg = 0;
    for (size_t j = 1; j < v.size(); ++j)
      if (std::abs(v[j]) > std::abs(v[arg])) arg = j;
    CHECK(v[arg] > 0);
  }
}

TEST_CASE("saab AC kernels match an independent eigen-solver") {
  // 2x2 window: AC kernels are eigenvectors of the covariance of DC-removed patches.
  const auto p = random_patches(2, 400, 5);
  const auto k = gusl::fit_saab(p);
  const size_t n = 4, count = p.count();
  std::vector<std::vector<double>> ac(count, std::vector<double>(n));
  std::vector<double> mean(n, 0.0);
  for (size_t i = 0; i < count; ++i) {
    double m = 0;
    for (size_t j = 0; j < n; ++j) m += p.values[i * n + j] / n;
    for (size_t j = 0; j < n; ++j) mean[j] += (ac[i][j] = p.values[i * n + j] - m) / count;
  }
  std::vector<double> cov(n * n, 0.0);
  for (size_t i = 0; i < count; ++i)
    for (size_t a = 0; a < n; ++a)
      for (size_t b = 0; b < n; ++b) cov[a * n + b] += (ac[i][a] - mean[a]) * (ac[i][b] - mean[b]) / count;
  const auto e = oracle::jacobi(cov, n);
  for (size_t c = 0; c < 3; ++c) {
    CHECK(k.energies[c + 1] == doctest::Approx(e.values[c]).epsilon(1e-9));
    // Same direction up to sign.
    CHECK(std::abs(std::abs(dot(k.kernel(c + 1), e.vectors[c])) - 1.0) < 1e-9);
  }
  CHECK(std::abs(e.values[3]) < 1e-12);
}

TEST_CASE("constant patches are pure DC and flagged degenerate") {
  gusl::PatchSet p;
  p.window = 5;
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 25; ++j) p.values.push_back(0.1 * (i % 4));
  const auto k = gusl::fit_saab(p);
  CHECK(k.count == 25);
  CHECK(k.degenerate);
  for (size_t c = 1; c < k.count; ++c) CHECK(k.energies[c] == doctest::Approx(0.0));
  CHECK(k.energies[0] > 0);
  for (size_t a = 0; a < k.count; ++a)
    for (size_t b = 0; b < k.count; ++b) CHECK(std::abs(dot(k.kernel(a), k.kernel(b)) - (a == b)) < 1e-9);
}

TEST_CASE("fit_saab needs W^2 patches") {
  const auto p = random_patches(5, 24, 1);
  try {
    gusl::fit_saab(p);
    FAIL("expected insufficient data");
  } catch (const gusl::Error& e) {
    CHECK(e.kind() == ErrorKind::InsufficientData);
  }
}

TEST_CASE("fit_saab is deterministic") {
  const auto p = random_patches(7, 120, 4);
  CHECK(gusl::fit_saab(p).kernels == gusl::fit_saab(p).kernels);
}

TEST_CASE("apply_saab on a constant image") {
  const auto k = gusl::fit_saab(random_patches(5, 100, 2));
  const auto s = gusl::apply_saab(Image(9, 9, 0.3), k, FeatureSource::Ldct);
  REQUIRE(s.channel_count() == 25);
  for (double v : s.channels[0].pixels()) CHECK(v == doctest::Approx(0.3 * 5).epsilon(1e-12));
  for (size_t c = 1; c < 25; ++c)
    for (double v : s.channels[c].pixels()) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("apply_saab preserves per-pixel energy") {
  const auto k = gusl::fit_saab(random_patches(5, 100, 3));
  const Image img = oracle::random_image(12, 10, 3);
  const auto s = gusl::apply_saab(img, k, FeatureSource::Ldct);
  for (size_t y = 0; y < img.height(); ++y)
    for (size_t x = 0; x < img.width(); ++x) {
      double patch = 0, coef = 0;
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) {
          const double v = img.at(gusl::reflect_index(static_cast<ptrdiff_t>(y) + dy, 12),
                                  gusl::reflect_index(static_cast<ptrdiff_t>(x) + dx, 10));
          patch += v * v;
        }
      for (const Image& ch : s.channels) coef += ch.at(y, x) * ch.at(y, x);
      CHECK(coef == doctest::Approx(patch).epsilon(1e-10));
    }
}

TEST_CASE("apply_saab of an impulse reproduces the kernels") {
  // Channels are patch inner products, so around an interior impulse each
  // channel map is its kernel rotated by 180 degrees.
  const auto k = gusl::fit_saab(random_patches(5, 100, 6));
  Image img(11, 11, 0.0);
  img.at(5, 5) = 1.0;
  const auto s = gusl::apply_saab(img, k, FeatureSource::Ldct);
  for (size_t c = 0; c < k.count; ++c)
    for (int dy = 0; dy < 5; ++dy)
      for (int dx = 0; dx < 5; ++dx)
        CHECK(s.channels[c].at(5 + 2 - dy, 5 + 2 - dx) == doctest::Approx(k.kernel(c)[dy * 5 + dx]).epsilon(1e-12));
}

TEST_CASE("apply_saab is translation equivariant away from borders") {
  const auto k = gusl::fit_saab(random_patches(3, 50, 7));
  const Image img = oracle::random_image(14, 14, 8);
  Image shifted(14, 14, 0.0);
  for (size_t y = 0; y + 2 < 14; ++y)
    for (size_t x = 0; x + 1 < 14; ++x) shifted.at(y + 2, x + 1) = img.at(y, x);
  const auto a = gusl::apply_saab(img, k, FeatureSource::Ldct);
  const auto b = gusl::apply_saab(shifted, k, FeatureSource::Ldct);
  for (size_t c = 0; c < k.count; ++c)
    for (size_t y = 2; y < 10; ++y)
      for (size_t x = 2; x < 10; ++x) CHECK(b.channels[c].at(y + 2, x + 1) == doctest::Approx(a.channels[c].at(y, x)));
}

TEST_CASE("apply_saab rejects images smaller than the window") {
  const auto k = gusl::fit_saab(random_patches(5, 100, 1));
  CHECK_THROWS_AS(gusl::apply_saab(Image(4, 9, 0.0), k, FeatureSource::Ldct), gusl::Error);
}

TEST_CASE("neighborhood width and column order") {
  gusl::FeatureStack a, b;
  a.source = FeatureSource::Ldct;
  b.source = FeatureSource::Diff;
  a.height = b.height = 8;
  a.width = b.width = 8;
  for (int c = 0; c < 25; ++c) {
    a.channels.emplace_back(8, 8, 0.0);
    a.channel_ids.push_back(c);
  }
  for (int c = 0; c < 49; ++c) {
    b.channels.emplace_back(8, 8, 0.0);
    b.channel_ids.push_back(c);
  }
  gusl::NeighborhoodSampler s({&a, &b}, 5);
  CHECK(s.cols() == 1850);
  CHECK(s.meta()[0] == gusl::ColumnMeta{FeatureSource::Ldct, 0, -2, -2});
  CHECK(s.meta()[1] == gusl::ColumnMeta{FeatureSource::Ldct, 1, -2, -2});
  CHECK(s.meta()[25] == gusl::ColumnMeta{FeatureSource::Ldct, 0, -2, -1});
  CHECK(s.meta()[625] == gusl::ColumnMeta{FeatureSource::Diff, 0, -2, -2});
  CHECK(s.meta()[1849] == gusl::ColumnMeta{FeatureSource::Diff, 48, 2, 2});
}

TEST_CASE("neighborhood of a linear ramp") {
  gusl::FeatureStack s;
  s.height = 9;
  s.width = 9;
  Image ramp(9, 9);
  for (size_t y = 0; y < 9; ++y)
    for (size_t x = 0; x < 9; ++x) ramp.at(y, x) = 10.0 * y + x;
  s.channels = {ramp};
  s.channel_ids = {0};
  const std::vector<gusl::FeatureStack> stacks{s};
  const auto m = gusl::neighborhood_construct(stacks, 5);
  REQUIRE(m.cols() == 25);
  const size_t pixel = 4 * 9 + 4;
  for (size_t j = 0; j < 25; ++j) {
    const auto& meta = m.meta()[j];
    CHECK(m.at(pixel, j) == 44.0 + 10.0 * meta.dy + meta.dx);
  }
}

TEST_CASE("neighborhood of a constant channel is constant") {
  gusl::FeatureStack s;
  s.height = 6;
  s.width = 7;
  s.channels = {Image(6, 7, 0.25)};
  s.channel_ids = {0};
  const std::vector<gusl::FeatureStack> stacks{s};
  const auto m = gusl::neighborhood_construct(stacks, 5);
  for (size_t j = 0; j < m.cols(); ++j)
    for (double v : m.col(j)) CHECK(v == 0.25);
}

TEST_CASE("neighborhood rejects mismatched stacks") {
  gusl::FeatureStack a, b;
  a.height = 6;
  a.width = 6;
  a.channels = {Image(6, 6, 0.0)};
  a.channel_ids = {0};
  b.height = 5;
  b.width = 6;
  b.channels = {Image(5, 6, 0.0)};
  b.channel_ids = {0};
  try {
    gusl::NeighborhoodSampler({&a, &b}, 5);
    FAIL("expected shape error");
  } catch (const gusl::Error& e) {
    CHECK(e.kind() == ErrorKind::Shape);
  }
}

TEST_CASE("raw channel is tagged -1") {
  const auto k = gusl::fit_saab(random_patches(3, 50, 1));
  const Image img = oracle::random_image(6, 6, 1);
  auto s = gusl::apply_saab(img, k, FeatureSource::Diff);
  gusl::append_raw_channel(s, img);
  CHECK(s.channel_ids.back() == -1);
  CHECK(s.channels.back() == img);
}

TEST_CASE("sample_patches respects the cap and is seeded") {
  std::vector<Image> imgs{oracle::random_image(40, 40, 1), oracle::random_image(40, 40, 2)};
  const auto a = gusl::sample_patches(imgs, 5, 500, 3);
  const auto b = gusl::sample_patches(imgs, 5, 500, 3);
  CHECK(a.count() <= 500);
  CHECK(a.count() > 100);
  CHECK(a.values == b.values);
  CHECK(gusl::sample_patches(imgs, 5, 100000, 3).count() == 3200);
}
