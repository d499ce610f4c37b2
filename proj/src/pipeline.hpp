#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "codebook.hpp"
#include "features.hpp"
#include "gbrt.hpp"
#include "image.hpp"
#include "rft.hpp"
#include "sfg.hpp"

namespace gusl {

inline constexpr const char* kModelVersion = "gusl-model/1";

struct TrainConfig {
  size_t level_count = 4;
  int bins = 16;
  double split = 0.8;
  uint64_t seed = 0;
  // Fraction of pixel rows used for training at level 1 and at coarser levels.
  double subsample_finest = 0.25;
  double subsample_coarse = 1.0;
  GbrtParams residual{};
  SfgParams sfg{};
  size_t codebook_k = 1024;
  int codebook_iters = 100;
  // Centroids from paired NDCT tiles instead of quantizing the LDCT tiles.
  bool codebook_from_ndct = false;
  bool clip = true;
  int ldct_window = 5;
  int diff_window = 7;
  int nc_window = 5;
  bool raw_pixel_channel = true;
  size_t saab_patch_cap = 100000;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Per-candidate RFT statistics captured while training one level.
struct LevelDiagnostics {
  std::vector<ColumnMeta> candidates;
  std::vector<double> train_loss, val_loss;
  std::vector<uint32_t> train_rank, val_rank, joint_score;
  size_t radius = 0;
  std::vector<uint32_t> selected;
  // RFT loss of each generated column and of each selected input column,
  // both on the full training rows.
  std::vector<double> lnt_loss;
  std::vector<double> selected_loss;
  bool sfg_degenerate = false;
};

struct LevelModel {
  size_t level = 0;  // 1 = finest
  SaabKernels saab_ldct;
  SaabKernels saab_diff;
  std::vector<uint32_t> selected;
  SfgModel sfg;
  GbrtModel regressor;
  LevelDiagnostics diagnostics;
};

struct GuslModel {
  std::string version = kModelVersion;
  TrainConfig config;
  Codebook codebook;
  std::vector<LevelModel> levels;  // coarsest first
};

struct ImagePair {
  Image ldct;
  Image ndct;
};

struct TrainResult {
  GuslModel model;
  // predictions[image][j]: restored prediction at the j-th processed level
  // (coarsest first), the same order as model.levels.
  std::vector<std::vector<Image>> predictions;
  std::vector<Image> seeds;  // codebook seed per image
  bool codebook_reduced = false;
};

TrainResult train(std::span<const ImagePair> pairs, const TrainConfig& cfg);

struct Restoration {
  Image seed;
  std::vector<Image> levels;  // coarsest first; back() is the output
};

Restoration restore_levels(const GuslModel& model, const Image& ldct);
Image restore(const GuslModel& model, const Image& ldct);

// Candidate feature sampler for one image at one level; shared by training
// and inference so both see identical feature values.
class LevelFeatures {
 public:
  LevelFeatures(const LevelModel& level, const TrainConfig& cfg, const Image& ldct, const Image& upscaled);
  LevelFeatures(const SaabKernels& saab_ldct, const SaabKernels& saab_diff, const TrainConfig& cfg,
                const Image& ldct, const Image& upscaled);
  LevelFeatures(const LevelFeatures&) = delete;
  LevelFeatures& operator=(const LevelFeatures&) = delete;

  const NeighborhoodSampler& sampler() const { return sampler_; }

 private:
  FeatureStack ldct_stack_;
  FeatureStack diff_stack_;
  NeighborhoodSampler sampler_;
};

// Regressor input for the given pixels: selected candidates then LNT columns.
FeatureMatrix level_inputs(const LevelModel& level, const NeighborhoodSampler& sampler,
                           std::span<const uint32_t> pixels);

struct Complexity {
  double param_count = 0;
  double macs_per_pixel = 0;
};

// Parameters: Saab kernel entries, LNT weights plus intercept, two per
// internal tree node (feature index, threshold) and one per leaf (weight),
// and 16 per codebook centroid. MACs per output pixel: at each level, W^2 per
// Saab kernel per source, |subset| per LNT projection and one comparison per
// tree level traversed (the tree's depth), weighted by 4^-(level-1); plus the
// codebook search, 16*k per 4x4 tile, i.e. k per coarsest-level pixel.
Complexity report_complexity(const GuslModel& model);

// Stable 64-bit seed for a (base, level, purpose) triple.
uint64_t derive_seed(uint64_t base, uint64_t level, uint64_t purpose);

}  // namespace gusl
