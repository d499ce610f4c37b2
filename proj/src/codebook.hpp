#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "image.hpp"

namespace gusl {

inline constexpr int kCodebookPatch = 4;
inline constexpr size_t kCodebookDim = kCodebookPatch * kCodebookPatch;

struct Codebook {
  size_t k = 0;
  std::vector<double> centroids;  // k x 16, row-major
  // Optional output tile per centroid (k x 16). Empty: the centroid itself.
  std::vector<double> values;

  std::span<const double> centroid(size_t i) const { return {centroids.data() + i * kCodebookDim, kCodebookDim}; }
  std::span<const double> output(size_t i) const {
    const auto& src = values.empty() ? centroids : values;
    return {src.data() + i * kCodebookDim, kCodebookDim};
  }
  friend bool operator==(const Codebook&, const Codebook&) = default;
};

struct KMeansTrace {
  std::vector<double> inertia;  // after each Lloyd iteration
  size_t iterations = 0;
  bool converged = false;
  bool k_reduced = false;       // fewer distinct patches than requested clusters
};

// Non-overlapping 4x4 patches of each image (reflect-padded up to a multiple
// of 4), flattened row-major. Returns count x 16 values.
std::vector<double> tile_patches(const Image& img);

// k-means++ seeding; returns k x 16 initial centroids.
std::vector<double> kmeanspp_init(std::span<const double> points, size_t k, uint64_t seed);

// Lloyd iterations from the given centroids until the assignment stops
// changing or max_iters is reached. An emptied cluster is moved onto the point
// farthest from its assigned centroid.
Codebook lloyd(std::span<const double> points, std::vector<double> centroids, int max_iters,
               KMeansTrace* trace = nullptr);

Codebook fit_codebook(std::span<const double> points, size_t k, uint64_t seed, int max_iters = 100,
                      KMeansTrace* trace = nullptr);

// Mean of the paired tiles assigned to each centroid; centroids without any
// assigned tile keep their own value.
std::vector<double> paired_centroids(const Codebook& cb, std::span<const double> keys,
                                     std::span<const double> paired);

// Index of the nearest centroid (ties go to the lowest index).
size_t nearest_centroid(const Codebook& cb, std::span<const double> point);

// Replace every 4x4 tile with its nearest centroid.
Image quantize_predict(const Image& img, const Codebook& cb);

}  // namespace gusl
