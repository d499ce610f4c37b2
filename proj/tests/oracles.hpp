#pragma once
// Slow, obviously-correct reference implementations used to check the library.
// None of these call into gusl except for plain data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <set>
#include <vector>

#include "gbrt.hpp"
#include "image.hpp"

namespace oracle {

// Cyclic Jacobi eigen-decomposition of a symmetric n x n matrix (row-major).
// Returns eigenvalues descending; vectors[i] is the unit eigenvector of values[i].
struct Eigen {
  std::vector<double> values;
  std::vector<std::vector<double>> vectors;
};

inline Eigen jacobi(std::vector<double> a, size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (size_t p = 0; p < n; ++p)
      for (size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
    if (off < 1e-30) break;
    for (size_t p = 0; p < n; ++p)
      for (size_t q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        for (size_t k = 0; k < n; ++k) {
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
  }
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](size_t x, size_t y) { return a[x * n + x] > a[y * n + y]; });
  Eigen e;
  for (size_t i : idx) {
    e.values.push_back(a[i * n + i]);
    std::vector<double> vec(n);
    for (size_t k = 0; k < n; ++k) vec[k] = v[k * n + i];
    e.vectors.push_back(vec);
  }
  return e;
}

inline double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sse(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return s;
}

// Every bin-center threshold evaluated by explicitly partitioning y.
inline double rft(const std::vector<double>& x, const std::vector<double>& y, int bins) {
  const double lo = *std::min_element(x.begin(), x.end());
  const double hi = *std::max_element(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double best = std::numeric_limits<double>::infinity();
  for (int b = 0; b < bins; ++b) {
    const double t = lo + (hi - lo) * (b + 0.5) / bins;
    std::vector<double> left, right;
    for (size_t i = 0; i < x.size(); ++i) (x[i] <= t ? left : right).push_back(y[i]);
    if (left.empty() || right.empty()) continue;
    best = std::min(best, (sse(left) + sse(right)) / n);
  }
  return std::isinf(best) ? sse(y) / n : best;
}

// Greedy second-order tree grown node by node with every (feature, midpoint)
// pair scored from scratch. Squared loss, so g = pred - y and h = 1.
struct Node {
  int feature = -1;
  double value = 0.0;
  int left = -1, right = -1;
};

inline double gain(double gl, double hl, double gr, double hr, double lambda, double gamma) {
  const double g = gl + gr, h = hl + hr;
  return 0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)) - gamma;
}

inline int grow(std::vector<Node>& out, const std::vector<std::vector<double>>& cols, const std::vector<double>& g,
                const std::vector<size_t>& rows, int depth, const gusl::GbrtParams& p) {
  double G = 0, H = 0;
  for (size_t r : rows) {
    G += g[r];
    H += 1;
  }
  const int at = static_cast<int>(out.size());
  out.emplace_back();
  int best_f = -1;
  double best_t = 0, best_gain = -std::numeric_limits<double>::infinity();
  if (depth < p.max_depth) {
    for (size_t f = 0; f < cols.size(); ++f) {
      std::set<double> uniq;
      for (size_t r : rows) uniq.insert(cols[f][r]);
      std::vector<double> u(uniq.begin(), uniq.end());
      for (size_t i = 0; i + 1 < u.size(); ++i) {
        double t = u[i] + (u[i + 1] - u[i]) / 2;
        if (!(t < u[i + 1])) t = u[i];
        double gl = 0, hl = 0;
        for (size_t r : rows)
          if (cols[f][r] <= t) {
            gl += g[r];
            hl += 1;
          }
        const double hr = H - hl;
        if (hl < p.min_child_weight || hr < p.min_child_weight) continue;
        const double s = gain(gl, hl, G - gl, hr, p.lambda, p.gamma);
        if (s > best_gain) {
          best_gain = s;
          best_f = static_cast<int>(f);
          best_t = t;
        }
      }
    }
  }
  if (best_f < 0 || !(best_gain > 0)) {
    out[at].value = H + p.lambda > 0 ? -G / (H + p.lambda) : 0.0;
    return at;
  }
  std::vector<size_t> l, r;
  for (size_t row : rows) (cols[best_f][row] <= best_t ? l : r).push_back(row);
  out[at].feature = best_f;
  out[at].value = best_t;
  const int li = grow(out, cols, g, l, depth + 1, p);
  const int ri = grow(out, cols, g, r, depth + 1, p);
  out[at].left = li;
  out[at].right = ri;
  return at;
}

inline std::vector<Node> tree(const std::vector<std::vector<double>>& cols, const std::vector<double>& grad,
                              const gusl::GbrtParams& p) {
  std::vector<size_t> rows(grad.size());
  for (size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  std::vector<Node> out;
  grow(out, cols, grad, rows, 0, p);
  return out;
}

// Plain Lloyd from given centroids (no empty-cluster handling; callers use
// data where clusters never empty). Records inertia after each update.
struct Lloyd {
  std::vector<double> centroids;
  std::vector<double> inertia;
};

inline size_t nearest(const std::vector<double>& centroids, const double* p, size_t dim) {
  size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (size_t c = 0; c * dim < centroids.size(); ++c) {
    double d = 0;
    for (size_t j = 0; j < dim; ++j) d += (p[j] - centroids[c * dim + j]) * (p[j] - centroids[c * dim + j]);
    if (d < bd) {
      bd = d;
      best = c;
    }
  }
  return best;
}

inline Lloyd lloyd(const std::vector<double>& pts, std::vector<double> centroids, size_t dim, int iters) {
  const size_t n = pts.size() / dim, k = centroids.size() / dim;
  std::vector<size_t> assign(n, k);
  Lloyd out;
  for (int it = 0; it < iters; ++it) {
    bool changed = false;
    for (size_t i = 0; i < n; ++i) {
      const size_t a = nearest(centroids, &pts[i * dim], dim);
      if (a != assign[i]) changed = true;
      assign[i] = a;
    }
    if (!changed) break;
    std::vector<double> sum(k * dim, 0.0);
    std::vector<double> cnt(k, 0.0);
    for (size_t i = 0; i < n; ++i) {
      cnt[assign[i]] += 1;
      for (size_t j = 0; j < dim; ++j) sum[assign[i] * dim + j] += pts[i * dim + j];
    }
    for (size_t c = 0; c < k; ++c)
      if (cnt[c] > 0)
        for (size_t j = 0; j < dim; ++j) centroids[c * dim + j] = sum[c * dim + j] / cnt[c];
    double in = 0;
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < dim; ++j) {
        const double d = pts[i * dim + j] - centroids[assign[i] * dim + j];
        in += d * d;
      }
    out.inertia.push_back(in);
  }
  out.centroids = centroids;
  return out;
}

// SSIM with the 11x11 Gaussian window (sigma 1.5) evaluated directly at every
// valid window position, no separable filtering.
inline double ssim(const gusl::Image& a, const gusl::Image& b) {
  const int r = 5;
  double w[11][11], total = 0;
  for (int i = -r; i <= r; ++i)
    for (int j = -r; j <= r; ++j) total += w[i + r][j + r] = std::exp(-(i * i + j * j) / (2 * 1.5 * 1.5));
  for (auto& row : w)
    for (double& x : row) x /= total;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double acc = 0;
  size_t count = 0;
  for (size_t y = r; y + r < a.height(); ++y)
    for (size_t x = r; x + r < a.width(); ++x) {
      double ma = 0, mb = 0;
      for (int i = -r; i <= r; ++i)
        for (int j = -r; j <= r; ++j) {
          ma += w[i + r][j + r] * a.at(y + i, x + j);
          mb += w[i + r][j + r] * b.at(y + i, x + j);
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = -r; i <= r; ++i)
        for (int j = -r; j <= r; ++j) {
          const double da = a.at(y + i, x + j) - ma, db = b.at(y + i, x + j) - mb;
          va += w[i + r][j + r] * da * da;
          vb += w[i + r][j + r] * db * db;
          cov += w[i + r][j + r] * da * db;
        }
      acc += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return acc / static_cast<double>(count);
}

// Root-to-leaf feature sets found by explicit recursion over tree nodes.
inline void paths(const gusl::Tree& t, int32_t at, std::vector<uint32_t> prefix,
                  std::vector<std::vector<uint32_t>>& out) {
  const gusl::TreeNode& n = t.nodes[at];
  if (n.is_leaf()) {
    out.push_back(prefix);
    return;
  }
  const auto f = static_cast<uint32_t>(n.feature);
  if (std::find(prefix.begin(), prefix.end(), f) == prefix.end()) prefix.push_back(f);
  paths(t, n.left, prefix, out);
  paths(t, n.right, prefix, out);
}

inline gusl::Image random_image(size_t h, size_t w, uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(h * w);
  for (double& x : v) x = u(gen);
  return gusl::Image(h, w, std::move(v));
}

}  // namespace oracle
