#include "rft.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "common.hpp"

namespace gusl {

namespace {

double population_variance(std::span<const double> y) {
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  double ss = 0.0;
  for (double v : y) ss += (v - mean) * (v - mean);
  return ss / static_cast<double>(y.size());
}

}  // namespace

double rft_loss(std::span<const double> x, std::span<const double> y, int bins) {
  if (x.size() != y.size()) throw Error(ErrorKind::Shape, "rft_loss length mismatch");
  if (bins < 2) throw Error(ErrorKind::InvalidConfig, "rft_loss needs at least 2 bins");
  if (x.size() < 2) throw Error(ErrorKind::InsufficientData, "rft_loss needs at least 2 samples");
  const auto [lo_it, hi_it] = std::minmax_element(x.begin(), x.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return population_variance(y);

  const double step = (hi - lo) / bins;
  auto center = [&](int j) { return lo + (j + 0.5) * step; };

  const auto n = static_cast<double>(y.size());
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / n;

  // Slot k holds samples with exactly k thresholds strictly below them, so
  // threshold j's left side (x <= t_j) is slots 0..j.
  std::vector<double> cnt(bins + 1, 0.0), sum(bins + 1, 0.0), sq(bins + 1, 0.0);
  for (size_t i = 0; i < x.size(); ++i) {
    auto k = static_cast<int>(std::floor((x[i] - lo) / step - 0.5)) + 1;
    k = std::clamp(k, 0, bins);
    while (k > 0 && !(center(k - 1) < x[i])) --k;
    while (k < bins && center(k) < x[i]) ++k;
    const double v = y[i] - mean;
    cnt[k] += 1.0;
    sum[k] += v;
    sq[k] += v * v;
  }
  const double total_sum = std::accumulate(sum.begin(), sum.end(), 0.0);
  const double total_sq = std::accumulate(sq.begin(), sq.end(), 0.0);

  double best = std::numeric_limits<double>::infinity();
  double nl = 0, sl = 0, ql = 0;
  for (int j = 0; j < bins; ++j) {
    nl += cnt[j];
    sl += sum[j];
    ql += sq[j];
    const double nr = n - nl;
    if (nl == 0.0 || nr == 0.0) continue;
    const double sr = total_sum - sl;
    const double qr = total_sq - ql;
    const double sse = std::max(0.0, ql - sl * sl / nl) + std::max(0.0, qr - sr * sr / nr);
    best = std::min(best, sse / n);
  }
  return std::isfinite(best) ? best : population_variance(y);
}

namespace {

RftReport finish_report(std::vector<double> losses) {
  RftReport r;
  r.losses = std::move(losses);
  r.order.resize(r.losses.size());
  std::iota(r.order.begin(), r.order.end(), 0u);
  std::stable_sort(r.order.begin(), r.order.end(),
                   [&](uint32_t a, uint32_t b) { return r.losses[a] < r.losses[b]; });
  r.rank.resize(r.order.size());
  std::vector<double> sorted(r.order.size());
  for (size_t i = 0; i < r.order.size(); ++i) {
    r.rank[r.order[i]] = static_cast<uint32_t>(i);
    sorted[i] = r.losses[r.order[i]];
  }
  r.elbow = elbow_index(sorted);
  return r;
}

}  // namespace

RftReport rank_columns(size_t cols, const ColumnFetcher& fetch, std::span<const double> y, int bins) {
  if (cols == 0 || y.empty()) throw Error(ErrorKind::InvalidInput, "rank_features on empty matrix");
  std::vector<double> losses(cols);
  parallel_for(cols, [&](size_t begin, size_t end) {
    std::vector<double> buf(y.size());
    for (size_t j = begin; j < end; ++j) {
      fetch(j, buf);
      losses[j] = rft_loss(buf, y, bins);
    }
  });
  return finish_report(std::move(losses));
}

RftReport rank_features(const FeatureMatrix& x, std::span<const double> y, int bins) {
  if (x.rows() != y.size()) throw Error(ErrorKind::Shape, "rank_features row count mismatch");
  return rank_columns(
      x.cols(), [&](size_t j, std::span<double> out) { std::copy_n(x.col(j).begin(), x.rows(), out.begin()); },
      y, bins);
}

size_t elbow_index(std::span<const double> sorted_losses) {
  const size_t n = sorted_losses.size();
  if (n <= 2) return 1;
  const auto [lo_it, hi_it] = std::minmax_element(sorted_losses.begin(), sorted_losses.end());
  const double range = *hi_it - *lo_it;
  if (!(range > 0.0)) return 1;
  auto norm_y = [&](size_t i) { return (sorted_losses[i] - *lo_it) / range; };
  const double y0 = norm_y(0), y1 = norm_y(n - 1);
  // Chord from (0, y0) to (1, y1); the denominator is constant so it is dropped.
  size_t best = 0;
  double best_dist = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double xi = static_cast<double>(i) / static_cast<double>(n - 1);
    const double dist = std::abs((y1 - y0) * xi - (norm_y(i) - y0));
    if (dist > best_dist + 1e-12) {
      best_dist = dist;
      best = i;
    }
  }
  return best + 1;
}

std::vector<uint32_t> select_by_joint_rank(std::span<const uint32_t> train_rank,
                                           std::span<const uint32_t> val_rank,
                                           std::vector<uint32_t>* joint_score, size_t* radius) {
  if (train_rank.size() != val_rank.size()) throw Error(ErrorKind::Shape, "rank vectors differ in length");
  std::vector<uint32_t> score(train_rank.size());
  for (size_t j = 0; j < score.size(); ++j) score[j] = std::max(train_rank[j], val_rank[j]);
  std::vector<double> sorted(score.begin(), score.end());
  std::sort(sorted.begin(), sorted.end());
  const size_t k = sorted.empty() ? 0 : elbow_index(sorted);

  std::vector<uint32_t> selected;
  for (size_t j = 0; j < score.size(); ++j)
    if (score[j] < k) selected.push_back(static_cast<uint32_t>(j));
  // No column has a joint score below the elbow radius (the two rankings
  // disagree on every top column): keep the best-agreeing ones.
  if (selected.empty() && !score.empty()) {
    const uint32_t best = *std::min_element(score.begin(), score.end());
    for (size_t j = 0; j < score.size(); ++j)
      if (score[j] == best) selected.push_back(static_cast<uint32_t>(j));
  }
  if (joint_score) *joint_score = std::move(score);
  if (radius) *radius = k;
  return selected;
}

JointSelection joint_select_columns(size_t cols, const ColumnFetcher& fetch,
                                    std::span<const double> y, int bins, double split,
                                    uint64_t seed) {
  if (!(split > 0.0 && split < 1.0)) throw Error(ErrorKind::InvalidConfig, "split must lie in (0, 1)");
  const size_t n = y.size();
  if (n < 10) throw Error(ErrorKind::InsufficientData, "joint_select needs at least 10 rows");

  std::vector<uint32_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0u);
  Rng rng(seed);
  for (size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  auto n_train = static_cast<size_t>(std::llround(split * static_cast<double>(n)));
  n_train = std::clamp<size_t>(n_train, 2, n - 2);
  std::vector<uint32_t> train_rows(perm.begin(), perm.begin() + static_cast<ptrdiff_t>(n_train));
  std::vector<uint32_t> val_rows(perm.begin() + static_cast<ptrdiff_t>(n_train), perm.end());
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(val_rows.begin(), val_rows.end());

  std::vector<double> y_train(train_rows.size()), y_val(val_rows.size());
  for (size_t i = 0; i < train_rows.size(); ++i) y_train[i] = y[train_rows[i]];
  for (size_t i = 0; i < val_rows.size(); ++i) y_val[i] = y[val_rows[i]];

  std::vector<double> train_loss(cols), val_loss(cols);
  parallel_for(cols, [&](size_t begin, size_t end) {
    std::vector<double> full(n), xt(train_rows.size()), xv(val_rows.size());
    for (size_t j = begin; j < end; ++j) {
      fetch(j, full);
      for (size_t i = 0; i < train_rows.size(); ++i) xt[i] = full[train_rows[i]];
      for (size_t i = 0; i < val_rows.size(); ++i) xv[i] = full[val_rows[i]];
      train_loss[j] = rft_loss(xt, y_train, bins);
      val_loss[j] = rft_loss(xv, y_val, bins);
    }
  });

  JointSelection out;
  out.train = finish_report(std::move(train_loss));
  out.validation = finish_report(std::move(val_loss));
  out.selected = select_by_joint_rank(out.train.rank, out.validation.rank, &out.joint_score, &out.radius);
  return out;
}

JointSelection joint_select(const FeatureMatrix& x, std::span<const double> y, int bins,
                            double split, uint64_t seed) {
  if (x.rows() != y.size()) throw Error(ErrorKind::Shape, "joint_select row count mismatch");
  if (x.cols() == 0) throw Error(ErrorKind::InvalidInput, "joint_select on empty matrix");
  return joint_select_columns(
      x.cols(), [&](size_t j, std::span<double> out) { std::copy_n(x.col(j).begin(), x.rows(), out.begin()); },
      y, bins, split, seed);
}

}  // namespace gusl
