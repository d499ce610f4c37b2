#include <random>

#include "codebook.hpp"
#include "common.hpp"
#include "doctest.h"
#include "oracles.hpp"

using gusl::Codebook;
using gusl::kCodebookDim;

namespace {

std::vector<double> random_points(size_t n, uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> pts(n * kCodebookDim);
  // Four loose blobs so clusters stay populated.
  for (size_t i = 0; i < n; ++i)
    for (size_t d = 0; d < kCodebookDim; ++d) pts[i * kCodebookDim + d] = 3.0 * static_cast<double>((i % 4) == d % 4) + g(gen);
  return pts;
}

}  // namespace

TEST_CASE("two coincident pairs give exact centroids") {
  std::vector<double> pts;
  for (double v : {0.2, 0.2, 0.8, 0.8})
    for (size_t d = 0; d < kCodebookDim; ++d) pts.push_back(v + 0.01 * d);
  const Codebook cb = gusl::fit_codebook(pts, 2, 3);
  REQUIRE(cb.k == 2);
  std::vector<double> firsts{cb.centroid(0)[0], cb.centroid(1)[0]};
  std::sort(firsts.begin(), firsts.end());
  CHECK(firsts == std::vector<double>{0.2, 0.8});
  for (size_t c = 0; c < 2; ++c)
    for (size_t d = 0; d < kCodebookDim; ++d) CHECK(cb.centroid(c)[d] == doctest::Approx(cb.centroid(c)[0] + 0.01 * d));
}

TEST_CASE("k = 1 is the mean") {
  const auto pts = random_points(50, 1);
  const Codebook cb = gusl::fit_codebook(pts, 1, 1);
  for (size_t d = 0; d < kCodebookDim; ++d) {
    double m = 0;
    for (size_t i = 0; i < 50; ++i) m += pts[i * kCodebookDim + d] / 50;
    CHECK(cb.centroid(0)[d] == doctest::Approx(m).epsilon(1e-12));
  }
}

TEST_CASE("lloyd matches an independent implementation from shared seeds") {
  const auto pts = random_points(500, 7);
  const auto init = gusl::kmeanspp_init(pts, 8, 5);
  REQUIRE(init.size() == 8 * kCodebookDim);
  gusl::KMeansTrace trace;
  const Codebook cb = gusl::lloyd(pts, init, 100, &trace);
  const auto ref = oracle::lloyd(pts, init, kCodebookDim, 100);
  REQUIRE(trace.inertia.size() == ref.inertia.size());
  for (size_t i = 0; i < ref.inertia.size(); ++i) CHECK(trace.inertia[i] == doctest::Approx(ref.inertia[i]).epsilon(1e-10));
  for (size_t i = 0; i < cb.centroids.size(); ++i) CHECK(cb.centroids[i] == doctest::Approx(ref.centroids[i]).epsilon(1e-10));
  CHECK(trace.converged);
  for (size_t i = 1; i < trace.inertia.size(); ++i) CHECK(trace.inertia[i] <= trace.inertia[i - 1] + 1e-9);
}

TEST_CASE("kmeans++ picks data points deterministically") {
  const auto pts = random_points(100, 2);
  const auto a = gusl::kmeanspp_init(pts, 6, 9);
  CHECK(a == gusl::kmeanspp_init(pts, 6, 9));
  for (size_t c = 0; c < 6; ++c) {
    bool found = false;
    for (size_t i = 0; i < 100 && !found; ++i)
      found = std::equal(a.begin() + c * kCodebookDim, a.begin() + (c + 1) * kCodebookDim, pts.begin() + i * kCodebookDim);
    CHECK(found);
  }
  CHECK_THROWS_AS(gusl::kmeanspp_init(pts, 101, 1), gusl::Error);
}

TEST_CASE("k is reduced to the number of distinct patches") {
  std::vector<double> pts;
  for (int i = 0; i < 10; ++i)
    for (size_t d = 0; d < kCodebookDim; ++d) pts.push_back(i % 3);
  gusl::KMeansTrace trace;
  const Codebook cb = gusl::fit_codebook(pts, 8, 1, 100, &trace);
  CHECK(cb.k == 3);
  CHECK(trace.k_reduced);
}

TEST_CASE("quantizing with the image's own tiles is exact") {
  const gusl::Image img = oracle::random_image(12, 8, 3);
  const auto tiles = gusl::tile_patches(img);
  REQUIRE(tiles.size() == 6 * kCodebookDim);
  Codebook cb;
  cb.k = 6;
  cb.centroids = tiles;
  CHECK(gusl::quantize_predict(img, cb) == img);
}

TEST_CASE("quantize with a single constant centroid") {
  Codebook cb;
  cb.k = 1;
  cb.centroids.assign(kCodebookDim, 0.6);
  const auto out = gusl::quantize_predict(oracle::random_image(7, 9, 1), cb);
  CHECK(out.height() == 7);
  CHECK(out.width() == 9);
  for (double v : out.pixels()) CHECK(v == 0.6);
}

TEST_CASE("quantize agrees with a brute-force nearest scan") {
  const gusl::Image img = oracle::random_image(8, 8, 4);
  Codebook cb;
  cb.k = 4;
  cb.centroids = gusl::tile_patches(oracle::random_image(8, 8, 5));
  const auto out = gusl::quantize_predict(img, cb);
  for (size_t ty = 0; ty < 2; ++ty)
    for (size_t tx = 0; tx < 2; ++tx) {
      std::vector<double> tile;
      for (size_t dy = 0; dy < 4; ++dy)
        for (size_t dx = 0; dx < 4; ++dx) tile.push_back(img.at(ty * 4 + dy, tx * 4 + dx));
      const size_t c = oracle::nearest(cb.centroids, tile.data(), kCodebookDim);
      for (size_t dy = 0; dy < 4; ++dy)
        for (size_t dx = 0; dx < 4; ++dx) CHECK(out.at(ty * 4 + dy, tx * 4 + dx) == cb.centroids[c * kCodebookDim + dy * 4 + dx]);
    }
}

TEST_CASE("quantization is idempotent") {
  const auto pts = random_points(200, 3);
  const Codebook cb = gusl::fit_codebook(pts, 5, 2);
  const gusl::Image img = oracle::random_image(16, 12, 8);
  const auto once = gusl::quantize_predict(img, cb);
  CHECK(gusl::quantize_predict(once, cb) == once);
}

TEST_CASE("paired centroids average the paired tiles") {
  Codebook cb;
  cb.k = 2;
  cb.centroids.assign(2 * kCodebookDim, 0.0);
  std::fill(cb.centroids.begin() + kCodebookDim, cb.centroids.end(), 1.0);
  std::vector<double> keys, paired;
  for (double k : {0.1, 0.9, 0.05})
    for (size_t d = 0; d < kCodebookDim; ++d) keys.push_back(k);
  for (double p : {0.3, 0.7, 0.5})
    for (size_t d = 0; d < kCodebookDim; ++d) paired.push_back(p);
  const auto v = gusl::paired_centroids(cb, keys, paired);
  CHECK(v[0] == doctest::Approx(0.4));
  CHECK(v[kCodebookDim] == doctest::Approx(0.7));
}

TEST_CASE("codebook errors") {
  CHECK_THROWS_AS(gusl::fit_codebook(std::vector<double>{}, 4, 1), gusl::Error);
  CHECK_THROWS_AS(gusl::fit_codebook(std::vector<double>(kCodebookDim, 0.0), 0, 1), gusl::Error);
  CHECK_THROWS_AS(gusl::quantize_predict(gusl::Image(4, 4, 0.0), Codebook{}), gusl::Error);
}
