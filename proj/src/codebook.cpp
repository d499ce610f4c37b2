#include "codebook.hpp"

#include <algorithm>
#include <atomic>
#include <limits>
#include <numeric>
#include <string>

#include "common.hpp"

namespace gusl {

namespace {

double sq_dist(const double* a, const double* b) {
  double s = 0.0;
  for (size_t i = 0; i < kCodebookDim; ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

size_t padded(size_t n) { return (n + kCodebookPatch - 1) / kCodebookPatch * kCodebookPatch; }

size_t point_count(std::span<const double> points) {
  if (points.size() % kCodebookDim != 0) throw Error(ErrorKind::Shape, "codebook points must be 16-D");
  return points.size() / kCodebookDim;
}

size_t distinct_count(std::span<const double> points) {
  const size_t n = point_count(points);
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  auto less = [&](size_t a, size_t b) {
    return std::lexicographical_compare(points.begin() + a * kCodebookDim, points.begin() + (a + 1) * kCodebookDim,
                                        points.begin() + b * kCodebookDim, points.begin() + (b + 1) * kCodebookDim);
  };
  std::sort(order.begin(), order.end(), less);
  size_t distinct = n == 0 ? 0 : 1;
  for (size_t i = 1; i < n; ++i)
    if (less(order[i - 1], order[i])) ++distinct;
  return distinct;
}

}  // namespace

std::vector<double> tile_patches(const Image& img) {
  const size_t ph = padded(img.height()), pw = padded(img.width());
  const auto h = static_cast<ptrdiff_t>(img.height()), w = static_cast<ptrdiff_t>(img.width());
  std::vector<double> out;
  out.reserve(ph * pw);
  for (size_t ty = 0; ty < ph; ty += kCodebookPatch)
    for (size_t tx = 0; tx < pw; tx += kCodebookPatch)
      for (size_t dy = 0; dy < kCodebookPatch; ++dy)
        for (size_t dx = 0; dx < kCodebookPatch; ++dx)
          out.push_back(img.at(reflect_index(static_cast<ptrdiff_t>(ty + dy), h),
                               reflect_index(static_cast<ptrdiff_t>(tx + dx), w)));
  return out;
}

std::vector<double> kmeanspp_init(std::span<const double> points, size_t k, uint64_t seed) {
  const size_t n = point_count(points);
  if (k == 0 || k > n) throw Error(ErrorKind::InvalidConfig, "kmeans++ needs 1 <= k <= point count");
  Rng rng(seed);
  std::vector<double> centroids;
  centroids.reserve(k * kCodebookDim);
  auto add = [&](size_t i) {
    centroids.insert(centroids.end(), points.begin() + i * kCodebookDim, points.begin() + (i + 1) * kCodebookDim);
  };
  add(rng.below(n));
  std::vector<double> d2(n);
  for (size_t i = 0; i < n; ++i) d2[i] = sq_dist(&points[i * kCodebookDim], centroids.data());
  while (centroids.size() < k * kCodebookDim) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (size_t i = 0; i < n; ++i) {
        if (d2[i] == 0.0) continue;
        pick = i;
        acc += d2[i];
        if (acc > target) break;
      }
    } else {
      pick = rng.below(n);
    }
    add(pick);
    const double* c = centroids.data() + centroids.size() - kCodebookDim;
    for (size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(&points[i * kCodebookDim], c));
  }
  return centroids;
}

Codebook lloyd(std::span<const double> points, std::vector<double> centroids, int max_iters, KMeansTrace* trace) {
  const size_t n = point_count(points);
  if (centroids.empty() || centroids.size() % kCodebookDim != 0)
    throw Error(ErrorKind::InvalidConfig, "lloyd needs at least one 16-D centroid");
  Codebook cb;
  cb.k = centroids.size() / kCodebookDim;
  cb.centroids = std::move(centroids);

  std::vector<size_t> assign(n, std::numeric_limits<size_t>::max());
  std::vector<double> dist(n);
  bool converged = false;
  int iter = 0;
  for (; iter < max_iters; ++iter) {
    std::atomic<bool> changed{false};
    parallel_for(n, [&](size_t begin, size_t end) {
      for (size_t i = begin; i < end; ++i) {
        const size_t a = nearest_centroid(cb, points.subspan(i * kCodebookDim, kCodebookDim));
        dist[i] = sq_dist(&points[i * kCodebookDim], &cb.centroids[a * kCodebookDim]);
        if (a != assign[i]) {
          assign[i] = a;
          changed.store(true, std::memory_order_relaxed);
        }
      }
    });
    if (!changed) {
      converged = true;
      break;
    }

    std::vector<double> sums(cb.k * kCodebookDim, 0.0);
    std::vector<size_t> counts(cb.k, 0);
    for (size_t i = 0; i < n; ++i) {
      ++counts[assign[i]];
      for (size_t d = 0; d < kCodebookDim; ++d) sums[assign[i] * kCodebookDim + d] += points[i * kCodebookDim + d];
    }
    for (size_t c = 0; c < cb.k; ++c) {
      if (counts[c] == 0) continue;
      for (size_t d = 0; d < kCodebookDim; ++d)
        cb.centroids[c * kCodebookDim + d] = sums[c * kCodebookDim + d] / static_cast<double>(counts[c]);
    }
    for (size_t i = 0; i < n; ++i) dist[i] = sq_dist(&points[i * kCodebookDim], &cb.centroids[assign[i] * kCodebookDim]);
    for (size_t c = 0; c < cb.k; ++c) {
      if (counts[c] != 0) continue;
      const auto far = static_cast<size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
      std::copy_n(points.begin() + far * kCodebookDim, kCodebookDim, cb.centroids.begin() + c * kCodebookDim);
      --counts[assign[far]];
      assign[far] = c;
      counts[c] = 1;
      dist[far] = 0.0;
    }
    if (trace) trace->inertia.push_back(std::accumulate(dist.begin(), dist.end(), 0.0));
  }
  if (trace) {
    trace->iterations = static_cast<size_t>(iter);
    trace->converged = converged;
  }
  return cb;
}

Codebook fit_codebook(std::span<const double> points, size_t k, uint64_t seed, int max_iters, KMeansTrace* trace) {
  const size_t n = point_count(points);
  if (n == 0) throw Error(ErrorKind::InsufficientData, "fit_codebook: no patches");
  if (k == 0) throw Error(ErrorKind::InvalidConfig, "fit_codebook: k must be >= 1");
  bool reduced = false;
  const size_t distinct = distinct_count(points);
  if (distinct < k) {
    k = distinct;
    reduced = true;
  }
  auto init = kmeanspp_init(points, k, seed);
  Codebook cb = lloyd(points, std::move(init), max_iters, trace);
  if (trace) trace->k_reduced = reduced;
  return cb;
}

std::vector<double> paired_centroids(const Codebook& cb, std::span<const double> keys,
                                     std::span<const double> paired) {
  if (keys.size() != paired.size()) throw Error(ErrorKind::Shape, "paired tiles differ in count");
  const size_t n = point_count(keys);
  std::vector<double> sums(cb.k * kCodebookDim, 0.0);
  std::vector<size_t> counts(cb.k, 0);
  for (size_t i = 0; i < n; ++i) {
    const size_t c = nearest_centroid(cb, keys.subspan(i * kCodebookDim, kCodebookDim));
    ++counts[c];
    for (size_t d = 0; d < kCodebookDim; ++d) sums[c * kCodebookDim + d] += paired[i * kCodebookDim + d];
  }
  std::vector<double> out = cb.centroids;
  for (size_t c = 0; c < cb.k; ++c)
    if (counts[c] > 0)
      for (size_t d = 0; d < kCodebookDim; ++d)
        out[c * kCodebookDim + d] = sums[c * kCodebookDim + d] / static_cast<double>(counts[c]);
  return out;
}

size_t nearest_centroid(const Codebook& cb, std::span<const double> point) {
  if (cb.k == 0) throw Error(ErrorKind::InvalidModel, "empty codebook");
  size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (size_t c = 0; c < cb.k; ++c) {
    const double d = sq_dist(point.data(), &cb.centroids[c * kCodebookDim]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

Image quantize_predict(const Image& img, const Codebook& cb) {
  if (cb.k == 0 || cb.centroids.size() != cb.k * kCodebookDim ||
      (!cb.values.empty() && cb.values.size() != cb.centroids.size()))
    throw Error(ErrorKind::InvalidModel, "empty or malformed codebook");
  const auto patches = tile_patches(img);
  const size_t tiles_x = padded(img.width()) / kCodebookPatch;
  Image out(img.height(), img.width());
  const size_t count = patches.size() / kCodebookDim;
  for (size_t t = 0; t < count; ++t) {
    const size_t c = nearest_centroid(cb, std::span<const double>(patches).subspan(t * kCodebookDim, kCodebookDim));
    const size_t ty = t / tiles_x * kCodebookPatch, tx = t % tiles_x * kCodebookPatch;
    for (size_t dy = 0; dy < kCodebookPatch; ++dy)
      for (size_t dx = 0; dx < kCodebookPatch; ++dx)
        if (ty + dy < img.height() && tx + dx < img.width())
          out.at(ty + dy, tx + dx) = cb.output(c)[dy * kCodebookPatch + dx];
  }
  return out;
}

}  // namespace gusl
