#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace gusl {

// Row-major grayscale raster. Intensities are normalized to [0, 1] at
// ingestion; intermediate residual images may hold any finite value.
class Image {
 public:
  Image() = default;
  Image(size_t height, size_t width, double fill = 0.0);
  Image(size_t height, size_t width, std::vector<double> data);

  size_t height() const { return height_; }
  size_t width() const { return width_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(size_t row, size_t col) { return data_[row * width_ + col]; }
  double at(size_t row, size_t col) const { return data_[row * width_ + col]; }

  std::span<double> pixels() { return data_; }
  std::span<const double> pixels() const { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Image& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  size_t height_ = 0;
  size_t width_ = 0;
  std::vector<double> data_;
};

// Index 0 holds the finest level (the source image).
struct Pyramid {
  std::vector<Image> levels;
  size_t level_count() const { return levels.size(); }
};

// Mirror an out-of-range coordinate back into [0, n) without repeating the
// edge sample (..., 2, 1, 0, 1, 2, ...).
inline ptrdiff_t reflect_index(ptrdiff_t i, ptrdiff_t n) {
  if (n == 1) return 0;
  const ptrdiff_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

Image downsample_mean(const Image& img);
Image upscale(const Image& img, size_t target_h, size_t target_w);
Pyramid build_pyramid(const Image& img, size_t level_count);
Image compose_prediction(const Image& prev, const Image& residual, bool clip);
Image subtract(const Image& a, const Image& b);

// Smallest pyramid level dimension accepted by build_pyramid.
inline constexpr size_t kMinLevelSize = 8;
size_t level_dim(size_t full, size_t level_index);

double mse(const Image& a, const Image& b);
double psnr(const Image& a, const Image& b, double peak = 1.0);
double ssim(const Image& a, const Image& b);

}  // namespace gusl
