#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "image.hpp"

namespace gusl {

enum class FeatureSource : uint8_t { Ldct = 0, Diff = 1, Lnt = 2 };

const char* feature_source_name(FeatureSource s);

// Where a feature column came from. For neighborhood columns `channel` is the
// Saab kernel index (-1 for the raw pixel channel) and (dy, dx) the offset
// from the center pixel. For generated columns `channel` is the projection index.
struct ColumnMeta {
  FeatureSource source = FeatureSource::Ldct;
  int channel = 0;
  int dy = 0;
  int dx = 0;

  friend bool operator==(const ColumnMeta&, const ColumnMeta&) = default;
};

// Per-pixel feature rows, stored column-major so per-dimension scans
// (RFT, split search) walk contiguous memory.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(size_t rows, size_t cols);

  size_t rows() const { return rows_; }
  size_t cols() const { return cols_; }

  std::span<double> col(size_t j) { return {data_.data() + j * rows_, rows_}; }
  std::span<const double> col(size_t j) const { return {data_.data() + j * rows_, rows_}; }
  double at(size_t r, size_t c) const { return data_[c * rows_ + r]; }
  double& at(size_t r, size_t c) { return data_[c * rows_ + r]; }

  std::vector<ColumnMeta>& meta() { return meta_; }
  const std::vector<ColumnMeta>& meta() const { return meta_; }

  void append_columns(const FeatureMatrix& other);
  FeatureMatrix select_columns(std::span<const uint32_t> cols) const;
  FeatureMatrix select_rows(std::span<const uint32_t> rows) const;

  // Row-wise concatenation; column counts must agree.
  static FeatureMatrix stack_rows(std::span<const FeatureMatrix> parts);

  // Throws InvalidInput if any entry is not finite.
  void check_finite() const;

 private:
  size_t rows_ = 0;
  size_t cols_ = 0;
  std::vector<double> data_;
  std::vector<ColumnMeta> meta_;
};

// Orthonormal DC + PCA filter bank over WxW patches. Row 0 is the DC kernel.
struct SaabKernels {
  int window = 0;
  size_t count = 0;              // C
  std::vector<double> kernels;   // C x W^2, row-major
  std::vector<double> energies;  // [0] DC energy, [1..] AC eigenvalues (descending)
  bool degenerate = false;

  std::span<const double> kernel(size_t c) const {
    const size_t n = static_cast<size_t>(window) * window;
    return {kernels.data() + c * n, n};
  }
};

// Row-major flattened WxW patches, one after another.
struct PatchSet {
  int window = 0;
  std::vector<double> values;
  size_t count() const {
    const size_t n = static_cast<size_t>(window) * window;
    return n == 0 ? 0 : values.size() / n;
  }
};

// Reflect-padded WxW patch centered at every sampled pixel. Pixels are taken
// on a seeded uniform grid whose stride is chosen so that the total over all
// images stays within `cap`.
PatchSet sample_patches(std::span<const Image> images, int window, size_t cap, uint64_t seed);

SaabKernels fit_saab(const PatchSet& patches);

// One channel per Saab kernel plus optional extra channels (e.g. raw pixels).
struct FeatureStack {
  FeatureSource source = FeatureSource::Ldct;
  size_t height = 0;
  size_t width = 0;
  std::vector<Image> channels;
  std::vector<int> channel_ids;  // kernel index, or -1 for the raw pixel channel

  size_t channel_count() const { return channels.size(); }
};

FeatureStack apply_saab(const Image& img, const SaabKernels& k, FeatureSource source);

// Appends the image itself as a channel tagged -1.
void append_raw_channel(FeatureStack& stack, const Image& img);

// Lazily evaluated neighborhood construction over a set of stacks of equal
// size. Column order: stack, then neighborhood offset (row-major), then channel.
class NeighborhoodSampler {
 public:
  NeighborhoodSampler(std::vector<const FeatureStack*> stacks, int window);

  size_t cols() const { return meta_.size(); }
  size_t pixels() const { return height_ * width_; }
  const std::vector<ColumnMeta>& meta() const { return meta_; }

  // out[i] = feature `col` at pixel index pixels[i] (row-major pixel index).
  void fill_column(size_t col, std::span<const uint32_t> pixels, std::span<double> out) const;
  FeatureMatrix gather(std::span<const uint32_t> cols, std::span<const uint32_t> pixels) const;

 private:
  struct Source {
    size_t stack;
    int dy, dx;
    size_t channel;
  };
  Source locate(size_t col) const;

  std::vector<const FeatureStack*> stacks_;
  std::vector<size_t> block_start_;
  int window_;
  size_t height_ = 0, width_ = 0;
  std::vector<ColumnMeta> meta_;
};

FeatureMatrix neighborhood_construct(std::span<const FeatureStack> stacks, int window = 5);

}  // namespace gusl
