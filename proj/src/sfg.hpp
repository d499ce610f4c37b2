#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "features.hpp"
#include "gbrt.hpp"

namespace gusl {

// Least-squares projection of a column subset onto the target.
struct LntProjection {
  std::vector<uint32_t> subset;
  std::vector<double> weights;
  double intercept = 0.0;
  friend bool operator==(const LntProjection&, const LntProjection&) = default;
};

struct SfgModel {
  std::vector<LntProjection> projections;
  size_t source_dims = 0;
  friend bool operator==(const SfgModel&, const SfgModel&) = default;
};

struct SfgParams {
  GbrtParams aux{.max_depth = 3, .rounds = 20, .learning_rate = 0.3, .lambda = 1.0, .subsample = 1.0};
  // Fit each projection only on the rows that reach the path's leaf.
  bool leaf_rows_only = false;
  friend bool operator==(const SfgParams&, const SfgParams&) = default;
};

struct PathSubset {
  std::vector<uint32_t> features;  // first-encounter order along the path
  size_t tree = 0;
  int32_t leaf = -1;  // preorder node index of the leaf
};

// Distinct split features along every root-to-leaf path, deduplicated as
// sets across the ensemble (first occurrence kept). Empty paths are dropped.
std::vector<PathSubset> path_subsets(const GbrtModel& model);

// Fits the auxiliary ensemble and returns its path subsets. An empty result
// means the ensemble learned no splits.
std::vector<PathSubset> extract_subsets(const FeatureMatrix& x, std::span<const double> y,
                                        const GbrtParams& aux, uint64_t seed,
                                        GbrtModel* fitted = nullptr);

// Least squares with intercept via normal equations on centered columns.
// When the Gram matrix is numerically singular, `ridge` (or, when negative,
// 1e-8 * trace / |subset|) is added to its diagonal.
LntProjection fit_lnt(const FeatureMatrix& x, std::span<const double> y,
                      std::span<const uint32_t> subset, double ridge = -1.0,
                      std::span<const uint32_t> rows = {});

struct SfgFit {
  SfgModel model;
  bool degenerate = false;
};

SfgFit fit_sfg(const FeatureMatrix& x, std::span<const double> y, const SfgParams& params,
               uint64_t seed);

// One new column per projection; metadata marks the projection index.
FeatureMatrix generate(const FeatureMatrix& x, const SfgModel& model);

}  // namespace gusl
