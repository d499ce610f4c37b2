#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "features.hpp"

namespace gusl {

// Relevant Feature Test for one dimension: best weighted two-sided MSE of y
// over `bins` equally spaced bin-center thresholds on the range of x. Falls
// back to Var(y) when no threshold leaves both sides non-empty.
double rft_loss(std::span<const double> x, std::span<const double> y, int bins);

struct RftReport {
  std::vector<double> losses;  // per column
  std::vector<uint32_t> order; // columns by ascending loss, ties by index
  std::vector<uint32_t> rank;  // rank[col] = position of col in order
  size_t elbow = 0;
};

// Fills `out` (length = row count) with column `col`.
using ColumnFetcher = std::function<void(size_t col, std::span<double> out)>;

RftReport rank_features(const FeatureMatrix& x, std::span<const double> y, int bins);
RftReport rank_columns(size_t cols, const ColumnFetcher& fetch, std::span<const double> y, int bins);

// Maximum distance to the chord joining the first and last points of the
// curve, both axes min-max normalized. Returns a count (index + 1); flat or
// collinear curves give 1.
size_t elbow_index(std::span<const double> sorted_losses);

struct JointSelection {
  std::vector<uint32_t> selected;  // ascending column indices
  RftReport train;
  RftReport validation;
  std::vector<uint32_t> joint_score;  // max(train rank, validation rank)
  size_t radius = 0;                  // columns with joint_score < radius are kept
};

// Seeded row split into train/validation, independent RFT on each, keep the
// columns that rank consistently well on both.
JointSelection joint_select(const FeatureMatrix& x, std::span<const double> y, int bins,
                            double split, uint64_t seed);
JointSelection joint_select_columns(size_t cols, const ColumnFetcher& fetch,
                                    std::span<const double> y, int bins, double split,
                                    uint64_t seed);

// Selection rule applied to precomputed ranks (exposed for diagnostics and tests).
std::vector<uint32_t> select_by_joint_rank(std::span<const uint32_t> train_rank,
                                           std::span<const uint32_t> val_rank,
                                           std::vector<uint32_t>* joint_score = nullptr,
                                           size_t* radius = nullptr);

}  // namespace gusl
