#include "image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "common.hpp"

namespace gusl {

Image::Image(size_t height, size_t width, double fill)
    : height_(height), width_(width), data_(height * width, fill) {}

Image::Image(size_t height, size_t width, std::vector<double> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (data_.size() != height * width)
    throw Error(ErrorKind::Shape, "image data length " + std::to_string(data_.size()) +
                                      " does not match " + std::to_string(height) + "x" +
                                      std::to_string(width));
}

Image downsample_mean(const Image& img) {
  if (img.height() < 2 || img.width() < 2)
    throw Error(ErrorKind::InvalidDimension, "downsample_mean needs at least 2x2 input");
  const size_t oh = (img.height() + 1) / 2;
  const size_t ow = (img.width() + 1) / 2;
  Image out(oh, ow);
  for (size_t r = 0; r < oh; ++r) {
    for (size_t c = 0; c < ow; ++c) {
      double sum = 0.0;
      int count = 0;
      for (size_t dr = 0; dr < 2; ++dr) {
        for (size_t dc = 0; dc < 2; ++dc) {
          const size_t sr = 2 * r + dr, sc = 2 * c + dc;
          if (sr < img.height() && sc < img.width()) {
            sum += img.at(sr, sc);
            ++count;
          }
        }
      }
      out.at(r, c) = sum / count;
    }
  }
  return out;
}

namespace {

struct Tap {
  size_t lo, hi;
  double frac;
};

// Half-pixel-centered source coordinates for each output sample.
std::vector<Tap> bilinear_taps(size_t src, size_t dst) {
  std::vector<Tap> taps(dst);
  const double scale = static_cast<double>(src) / static_cast<double>(dst);
  for (size_t i = 0; i < dst; ++i) {
    double x = (static_cast<double>(i) + 0.5) * scale - 0.5;
    x = std::clamp(x, 0.0, static_cast<double>(src - 1));
    const auto lo = static_cast<size_t>(std::floor(x));
    const size_t hi = std::min(lo + 1, src - 1);
    taps[i] = {lo, hi, x - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

Image upscale(const Image& img, size_t target_h, size_t target_w) {
  if (img.empty()) throw Error(ErrorKind::InvalidDimension, "upscale of empty image");
  if (target_h < img.height() || target_w < img.width())
    throw Error(ErrorKind::InvalidDimension, "upscale target smaller than source");
  const auto rows = bilinear_taps(img.height(), target_h);
  const auto cols = bilinear_taps(img.width(), target_w);
  Image out(target_h, target_w);
  for (size_t r = 0; r < target_h; ++r) {
    const Tap& tr = rows[r];
    for (size_t c = 0; c < target_w; ++c) {
      const Tap& tc = cols[c];
      const double top = img.at(tr.lo, tc.lo) + tc.frac * (img.at(tr.lo, tc.hi) - img.at(tr.lo, tc.lo));
      const double bot = img.at(tr.hi, tc.lo) + tc.frac * (img.at(tr.hi, tc.hi) - img.at(tr.hi, tc.lo));
      out.at(r, c) = top + tr.frac * (bot - top);
    }
  }
  return out;
}

size_t level_dim(size_t full, size_t level_index) {
  size_t d = full;
  for (size_t i = 0; i < level_index; ++i) d = (d + 1) / 2;
  return d;
}

Pyramid build_pyramid(const Image& img, size_t level_count) {
  if (level_count < 2) throw Error(ErrorKind::InvalidConfig, "pyramid needs at least 2 levels");
  const size_t last = level_count - 1;
  if (level_dim(img.height(), last) < kMinLevelSize || level_dim(img.width(), last) < kMinLevelSize)
    throw Error(ErrorKind::InvalidConfig,
                "coarsest pyramid level would be smaller than 8x8 for " +
                    std::to_string(img.height()) + "x" + std::to_string(img.width()) + " with " +
                    std::to_string(level_count) + " levels");
  Pyramid p;
  p.levels.reserve(level_count);
  p.levels.push_back(img);
  for (size_t i = 1; i < level_count; ++i) p.levels.push_back(downsample_mean(p.levels.back()));
  return p;
}

Image compose_prediction(const Image& prev, const Image& residual, bool clip) {
  if (!prev.same_shape(residual)) throw Error(ErrorKind::Shape, "compose_prediction shape mismatch");
  Image out(prev.height(), prev.width());
  auto o = out.pixels();
  auto a = prev.pixels();
  auto b = residual.pixels();
  for (size_t i = 0; i < o.size(); ++i) {
    const double v = a[i] + b[i];
    o[i] = clip ? std::clamp(v, 0.0, 1.0) : v;
  }
  return out;
}

Image subtract(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw Error(ErrorKind::Shape, "subtract shape mismatch");
  Image out(a.height(), a.width());
  for (size_t i = 0; i < out.size(); ++i) out.pixels()[i] = a.pixels()[i] - b.pixels()[i];
  return out;
}

double mse(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw Error(ErrorKind::Shape, "mse shape mismatch");
  if (a.empty()) throw Error(ErrorKind::InvalidDimension, "mse of empty images");
  double sum = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a.pixels()[i] - b.pixels()[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

double psnr(const Image& a, const Image& b, double peak) {
  if (!(peak > 0.0)) throw Error(ErrorKind::InvalidConfig, "psnr peak must be positive");
  const double m = mse(a, b);
  if (m == 0.0) throw Error(ErrorKind::IdenticalImages, "psnr undefined for identical images");
  return 10.0 * std::log10(peak * peak / m);
}

namespace {

constexpr int kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;

std::vector<double> gaussian_window() {
  std::vector<double> w(kSsimWindow * kSsimWindow);
  const int r = kSsimWindow / 2;
  double total = 0.0;
  for (int y = -r; y <= r; ++y)
    for (int x = -r; x <= r; ++x) {
      const double v = std::exp(-(x * x + y * y) / (2.0 * kSsimSigma * kSsimSigma));
      w[(y + r) * kSsimWindow + (x + r)] = v;
      total += v;
    }
  for (auto& v : w) v /= total;
  return w;
}

}  // namespace

// Local statistics over every fully-contained 11x11 window ("valid" region).
double ssim(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw Error(ErrorKind::Shape, "ssim shape mismatch");
  if (a.height() < kSsimWindow || a.width() < kSsimWindow)
    throw Error(ErrorKind::InvalidDimension, "ssim needs images of at least 11x11");
  constexpr double peak = 1.0;
  constexpr double c1 = (0.01 * peak) * (0.01 * peak);
  constexpr double c2 = (0.03 * peak) * (0.03 * peak);
  static const std::vector<double> window = gaussian_window();

  const size_t oh = a.height() - kSsimWindow + 1;
  const size_t ow = a.width() - kSsimWindow + 1;
  double total = 0.0;
  for (size_t r = 0; r < oh; ++r) {
    for (size_t c = 0; c < ow; ++c) {
      double mu_a = 0, mu_b = 0, saa = 0, sbb = 0, sab = 0;
      for (int y = 0; y < kSsimWindow; ++y) {
        for (int x = 0; x < kSsimWindow; ++x) {
          const double w = window[y * kSsimWindow + x];
          const double va = a.at(r + y, c + x);
          const double vb = b.at(r + y, c + x);
          mu_a += w * va;
          mu_b += w * vb;
          saa += w * va * va;
          sbb += w * vb * vb;
          sab += w * va * vb;
        }
      }
      const double var_a = saa - mu_a * mu_a;
      const double var_b = sbb - mu_b * mu_b;
      const double cov = sab - mu_a * mu_b;
      const double num = (2 * mu_a * mu_b + c1) * (2 * cov + c2);
      const double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
      total += num / den;
    }
  }
  return total / static_cast<double>(oh * ow);
}

}  // namespace gusl
