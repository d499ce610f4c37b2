#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "features.hpp"

namespace gusl {

struct GbrtParams {
  int max_depth = 6;
  int rounds = 300;
  double learning_rate = 0.1;
  double lambda = 1.0;
  double gamma = 0.0;
  double min_child_weight = 1.0;
  double subsample = 0.8;
  int hist_bins = 256;
  // Above this many rows, split candidates come from quantile histograms.
  size_t exact_max_rows = 50000;

  void validate() const;
  friend bool operator==(const GbrtParams&, const GbrtParams&) = default;
};

// Flat binary tree in preorder. Leaves have feature == -1 and carry a weight
// in `value`; internal nodes send x[feature] <= value to `left`.
struct TreeNode {
  int32_t feature = -1;
  double value = 0.0;
  int32_t left = -1;
  int32_t right = -1;

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double leaf_value(const FeatureMatrix& x, size_t row) const;
  int depth() const;
  size_t internal_count() const;
  size_t leaf_count() const;
  friend bool operator==(const Tree&, const Tree&) = default;
};

struct GbrtModel {
  GbrtParams params;
  double base_score = 0.0;
  std::vector<Tree> trees;

  std::vector<double> predict(const FeatureMatrix& x) const;
  double predict_row(const FeatureMatrix& x, size_t row) const;
  // Largest feature index referenced by any split, or -1 if none.
  int max_feature() const;
  friend bool operator==(const GbrtModel&, const GbrtModel&) = default;
};

struct GbrtTrace {
  std::vector<double> train_mse;  // after each round, over all rows
};

GbrtModel fit_gbrt(const FeatureMatrix& x, std::span<const double> y, const GbrtParams& params,
                   uint64_t seed, GbrtTrace* trace = nullptr);

}  // namespace gusl
