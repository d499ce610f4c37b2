#include "features.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>

#include "common.hpp"

namespace gusl {

const char* feature_source_name(FeatureSource s) {
  switch (s) {
    case FeatureSource::Ldct: return "ldct";
    case FeatureSource::Diff: return "diff";
    case FeatureSource::Lnt: return "lnt";
  }
  return "?";
}

FeatureMatrix::FeatureMatrix(size_t rows, size_t cols)
    : rows_(rows), cols_(cols), data_(rows * cols, 0.0), meta_(cols) {}

void FeatureMatrix::append_columns(const FeatureMatrix& other) {
  if (cols_ == 0 && rows_ == 0) {
    *this = other;
    return;
  }
  if (other.rows_ != rows_) throw Error(ErrorKind::Shape, "append_columns row count mismatch");
  data_.insert(data_.end(), other.data_.begin(), other.data_.end());
  meta_.insert(meta_.end(), other.meta_.begin(), other.meta_.end());
  cols_ += other.cols_;
}

FeatureMatrix FeatureMatrix::select_columns(std::span<const uint32_t> cols) const {
  FeatureMatrix out(rows_, cols.size());
  for (size_t j = 0; j < cols.size(); ++j) {
    if (cols[j] >= cols_) throw Error(ErrorKind::Shape, "column index out of range");
    std::copy_n(col(cols[j]).begin(), rows_, out.col(j).begin());
    out.meta_[j] = meta_[cols[j]];
  }
  return out;
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const uint32_t> rows) const {
  FeatureMatrix out(rows.size(), cols_);
  out.meta_ = meta_;
  for (size_t j = 0; j < cols_; ++j) {
    auto src = col(j);
    auto dst = out.col(j);
    for (size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] >= rows_) throw Error(ErrorKind::Shape, "row index out of range");
      dst[i] = src[rows[i]];
    }
  }
  return out;
}

FeatureMatrix FeatureMatrix::stack_rows(std::span<const FeatureMatrix> parts) {
  if (parts.empty()) return {};
  size_t total = 0;
  for (const auto& p : parts) {
    if (p.cols_ != parts[0].cols_) throw Error(ErrorKind::Shape, "stack_rows column mismatch");
    total += p.rows_;
  }
  FeatureMatrix out(total, parts[0].cols_);
  out.meta_ = parts[0].meta_;
  for (size_t j = 0; j < out.cols_; ++j) {
    auto dst = out.col(j).begin();
    for (const auto& p : parts) dst = std::copy(p.col(j).begin(), p.col(j).end(), dst);
  }
  return out;
}

void FeatureMatrix::check_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidInput, "feature matrix has non-finite entries");
  if (meta_.size() != cols_) throw Error(ErrorKind::Shape, "column metadata length mismatch");
}

namespace {

void read_patch(const Image& img, ptrdiff_t cy, ptrdiff_t cx, int window, double* out) {
  const ptrdiff_t r = window / 2;
  const auto h = static_cast<ptrdiff_t>(img.height());
  const auto w = static_cast<ptrdiff_t>(img.width());
  for (ptrdiff_t dy = 0; dy < window; ++dy) {
    const ptrdiff_t y = reflect_index(cy + dy - r, h);
    for (ptrdiff_t dx = 0; dx < window; ++dx) *out++ = img.at(y, reflect_index(cx + dx - r, w));
  }
}

}  // namespace

PatchSet sample_patches(std::span<const Image> images, int window, size_t cap, uint64_t seed) {
  if (window < 1) throw Error(ErrorKind::InvalidConfig, "patch window must be positive");
  size_t total = 0;
  for (const auto& img : images) total += img.size();
  size_t stride = 1;
  while (cap > 0 && total / (stride * stride) > cap) ++stride;

  Rng rng(seed);
  PatchSet set;
  set.window = window;
  const size_t n = static_cast<size_t>(window) * window;
  for (const auto& img : images) {
    const size_t oy = stride > 1 ? rng.below(stride) : 0;
    const size_t ox = stride > 1 ? rng.below(stride) : 0;
    for (size_t y = oy; y < img.height(); y += stride) {
      for (size_t x = ox; x < img.width(); x += stride) {
        const size_t at = set.values.size();
        set.values.resize(at + n);
        read_patch(img, static_cast<ptrdiff_t>(y), static_cast<ptrdiff_t>(x), window, set.values.data() + at);
      }
    }
  }
  return set;
}

SaabKernels fit_saab(const PatchSet& patches) {
  const int window = patches.window;
  if (window < 1) throw Error(ErrorKind::InvalidConfig, "saab window must be positive");
  const auto n = static_cast<Eigen::Index>(window) * window;
  const size_t count = patches.count();
  if (count < static_cast<size_t>(n))
    throw Error(ErrorKind::InsufficientData, "fit_saab needs at least W^2 = " + std::to_string(n) +
                                                 " patches, got " + std::to_string(count));

  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> raw(
      patches.values.data(), static_cast<Eigen::Index>(count), n);

  // DC kernel (1/W, ..., 1/W) has unit norm; its coefficient is W * patch mean.
  const Eigen::VectorXd dc = Eigen::VectorXd::Constant(n, 1.0 / window);
  const Eigen::VectorXd dc_coef = raw * dc;
  Eigen::MatrixXd ac = raw - dc_coef * dc.transpose();

  const Eigen::RowVectorXd mean = ac.colwise().mean();
  ac.rowwise() -= mean;
  const Eigen::MatrixXd cov = (ac.transpose() * ac) / static_cast<double>(count);

  // Orthonormal basis of the DC complement: columns 1..n-1 of the Householder
  // reflector that maps e1 onto the DC direction.
  Eigen::MatrixXd complement(n, n - 1);
  {
    Eigen::VectorXd u = -dc;
    u(0) += 1.0;
    const double norm = u.norm();
    Eigen::MatrixXd reflector = Eigen::MatrixXd::Identity(n, n);
    if (norm > 0.0) {
      u /= norm;
      reflector -= 2.0 * u * u.transpose();
    }
    complement = reflector.rightCols(n - 1);
  }

  SaabKernels out;
  out.window = window;
  out.count = static_cast<size_t>(n);
  out.kernels.assign(static_cast<size_t>(n * n), 0.0);
  out.energies.assign(static_cast<size_t>(n), 0.0);
  for (Eigen::Index j = 0; j < n; ++j) out.kernels[j] = dc(j);
  out.energies[0] = dc_coef.squaredNorm() / static_cast<double>(count);

  if (n > 1) {
    const Eigen::MatrixXd reduced = complement.transpose() * cov * complement;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(reduced);
    if (solver.info() != Eigen::Success)
      throw Error(ErrorKind::NumericalFailure, "saab eigendecomposition failed");
    const Eigen::VectorXd& values = solver.eigenvalues();
    const Eigen::MatrixXd vectors = complement * solver.eigenvectors();
    const double scale = std::max(1.0, cov.diagonal().cwiseAbs().maxCoeff());
    out.degenerate = values.maxCoeff() <= 1e-14 * scale;
    for (Eigen::Index k = 0; k < n - 1; ++k) {
      // Eigen returns ascending order.
      const Eigen::Index src = n - 2 - k;
      Eigen::VectorXd v = vectors.col(src);
      Eigen::Index arg = 0;
      for (Eigen::Index j = 1; j < n; ++j)
        if (std::abs(v(j)) > std::abs(v(arg))) arg = j;
      if (v(arg) < 0) v = -v;
      for (Eigen::Index j = 0; j < n; ++j) out.kernels[(k + 1) * n + j] = v(j);
      out.energies[k + 1] = std::max(0.0, values(src));
    }
  }
  return out;
}

FeatureStack apply_saab(const Image& img, const SaabKernels& k, FeatureSource source) {
  const int window = k.window;
  if (window % 2 == 0) throw Error(ErrorKind::InvalidConfig, "apply_saab needs an odd window");
  if (img.height() < static_cast<size_t>(window) || img.width() < static_cast<size_t>(window))
    throw Error(ErrorKind::InvalidDimension, "image smaller than saab window");
  const auto n = static_cast<Eigen::Index>(window) * window;
  const auto c = static_cast<Eigen::Index>(k.count);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> bank(
      k.kernels.data(), c, n);

  FeatureStack stack;
  stack.source = source;
  stack.height = img.height();
  stack.width = img.width();
  stack.channels.assign(k.count, Image(img.height(), img.width()));
  for (size_t ch = 0; ch < k.count; ++ch) stack.channel_ids.push_back(static_cast<int>(ch));

  const auto w = static_cast<Eigen::Index>(img.width());
  parallel_for(img.height(), [&](size_t begin, size_t end) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows(w, n);
    Eigen::MatrixXd coefs(w, c);
    for (size_t y = begin; y < end; ++y) {
      for (Eigen::Index x = 0; x < w; ++x)
        read_patch(img, static_cast<ptrdiff_t>(y), x, window, rows.row(x).data());
      coefs.noalias() = rows * bank.transpose();
      for (Eigen::Index ch = 0; ch < c; ++ch)
        for (Eigen::Index x = 0; x < w; ++x) stack.channels[ch].at(y, x) = coefs(x, ch);
    }
  });
  return stack;
}

void append_raw_channel(FeatureStack& stack, const Image& img) {
  if (img.height() != stack.height || img.width() != stack.width)
    throw Error(ErrorKind::Shape, "raw channel shape mismatch");
  stack.channels.push_back(img);
  stack.channel_ids.push_back(-1);
}

NeighborhoodSampler::NeighborhoodSampler(std::vector<const FeatureStack*> stacks, int window)
    : stacks_(std::move(stacks)), window_(window) {
  if (window_ < 1 || window_ % 2 == 0) throw Error(ErrorKind::InvalidConfig, "neighborhood window must be odd");
  if (stacks_.empty()) throw Error(ErrorKind::InvalidInput, "neighborhood construction needs a stack");
  height_ = stacks_[0]->height;
  width_ = stacks_[0]->width;
  const int r = window_ / 2;
  size_t start = 0;
  for (const FeatureStack* s : stacks_) {
    if (s->height != height_ || s->width != width_)
      throw Error(ErrorKind::Shape, "feature stacks differ in size");
    block_start_.push_back(start);
    for (int dy = -r; dy <= r; ++dy)
      for (int dx = -r; dx <= r; ++dx)
        for (size_t ch = 0; ch < s->channel_count(); ++ch)
          meta_.push_back({s->source, s->channel_ids[ch], dy, dx});
    start += static_cast<size_t>(window_) * window_ * s->channel_count();
  }
  block_start_.push_back(start);
}

NeighborhoodSampler::Source NeighborhoodSampler::locate(size_t col) const {
  if (col >= meta_.size()) throw Error(ErrorKind::Shape, "neighborhood column out of range");
  size_t s = 0;
  while (col >= block_start_[s + 1]) ++s;
  const size_t channels = stacks_[s]->channel_count();
  const size_t rem = col - block_start_[s];
  const auto offset = static_cast<int>(rem / channels);
  const int r = window_ / 2;
  return {s, offset / window_ - r, offset % window_ - r, rem % channels};
}

void NeighborhoodSampler::fill_column(size_t col, std::span<const uint32_t> pixels,
                                      std::span<double> out) const {
  const Source src = locate(col);
  const Image& ch = stacks_[src.stack]->channels[src.channel];
  const auto h = static_cast<ptrdiff_t>(height_);
  const auto w = static_cast<ptrdiff_t>(width_);
  for (size_t i = 0; i < pixels.size(); ++i) {
    const auto y = static_cast<ptrdiff_t>(pixels[i] / width_);
    const auto x = static_cast<ptrdiff_t>(pixels[i] % width_);
    out[i] = ch.at(reflect_index(y + src.dy, h), reflect_index(x + src.dx, w));
  }
}

FeatureMatrix NeighborhoodSampler::gather(std::span<const uint32_t> cols,
                                          std::span<const uint32_t> pixels) const {
  FeatureMatrix out(pixels.size(), cols.size());
  for (size_t j = 0; j < cols.size(); ++j) {
    fill_column(cols[j], pixels, out.col(j));
    out.meta()[j] = meta_[cols[j]];
  }
  return out;
}

FeatureMatrix neighborhood_construct(std::span<const FeatureStack> stacks, int window) {
  std::vector<const FeatureStack*> ptrs;
  for (const auto& s : stacks) ptrs.push_back(&s);
  NeighborhoodSampler sampler(std::move(ptrs), window);
  std::vector<uint32_t> cols(sampler.cols()), pixels(sampler.pixels());
  for (size_t i = 0; i < cols.size(); ++i) cols[i] = static_cast<uint32_t>(i);
  for (size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<uint32_t>(i);
  return sampler.gather(cols, pixels);
}

}  // namespace gusl
