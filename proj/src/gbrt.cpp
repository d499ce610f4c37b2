#include "gbrt.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>

#include "common.hpp"

namespace gusl {

void GbrtParams::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorKind::InvalidConfig, "gbrt: " + what); };
  if (max_depth < 0) fail("max_depth must be >= 0");
  if (rounds < 1) fail("rounds must be >= 1");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) fail("learning_rate must lie in (0, 1]");
  if (!(lambda >= 0.0)) fail("lambda must be >= 0");
  if (!(gamma >= 0.0)) fail("gamma must be >= 0");
  if (!(min_child_weight >= 0.0)) fail("min_child_weight must be >= 0");
  if (!(subsample > 0.0 && subsample <= 1.0)) fail("subsample must lie in (0, 1]");
  if (hist_bins < 2 || hist_bins > 256) fail("hist_bins must lie in [2, 256]");
}

double Tree::leaf_value(const FeatureMatrix& x, size_t row) const {
  int32_t at = 0;
  while (!nodes[at].is_leaf()) {
    const TreeNode& n = nodes[at];
    at = x.at(row, static_cast<size_t>(n.feature)) <= n.value ? n.left : n.right;
  }
  return nodes[at].value;
}

int Tree::depth() const {
  std::function<int(int32_t)> walk = [&](int32_t i) -> int {
    const TreeNode& n = nodes[i];
    return n.is_leaf() ? 0 : 1 + std::max(walk(n.left), walk(n.right));
  };
  return nodes.empty() ? 0 : walk(0);
}

size_t Tree::internal_count() const {
  return static_cast<size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return !n.is_leaf(); }));
}

size_t Tree::leaf_count() const { return nodes.size() - internal_count(); }

double GbrtModel::predict_row(const FeatureMatrix& x, size_t row) const {
  double sum = 0.0;
  for (const Tree& t : trees) sum += t.leaf_value(x, row);
  return base_score + params.learning_rate * sum;
}

std::vector<double> GbrtModel::predict(const FeatureMatrix& x) const {
  const int needed = max_feature();
  if (needed >= 0 && static_cast<size_t>(needed) >= x.cols())
    throw Error(ErrorKind::Shape, "predict: model uses feature " + std::to_string(needed) + " but input has " +
                                      std::to_string(x.cols()) + " columns");
  std::vector<double> out(x.rows());
  parallel_for(x.rows(), [&](size_t begin, size_t end) {
    for (size_t r = begin; r < end; ++r) out[r] = predict_row(x, r);
  });
  return out;
}

int GbrtModel::max_feature() const {
  int m = -1;
  for (const Tree& t : trees)
    for (const TreeNode& n : t.nodes) m = std::max(m, n.feature);
  return m;
}

namespace {

struct Candidate {
  double gain = 0.0;
  double threshold = 0.0;
  bool valid = false;
};

struct BuildNode {
  double g = 0.0, h = 0.0;
  int32_t feature = -1;
  double threshold = 0.0;
  int32_t left = -1, right = -1;
};

// Split candidates per feature, prepared once per fit.
struct SplitIndex {
  bool exact = true;
  size_t cols = 0;
  std::vector<std::vector<uint32_t>> sorted;  // exact: rows by ascending value
  std::vector<std::vector<double>> sorted_values;
  // hist: bin codes in blocks of kBlock features, row-major within a block
  // (codes[(block * rows + r) * kBlock + j]); feature f's bins start at
  // offsets[f] in a node histogram, and bin b holds x <= cuts[f][b].
  size_t rows = 0;
  std::vector<uint8_t> codes;
  std::vector<std::vector<double>> cuts;
  std::vector<size_t> offsets;
  size_t total_bins = 0;
};

constexpr size_t kQuantileSample = 16384;
// Features per code block; a block's histogram stays cache resident.
constexpr size_t kBlock = 64;

SplitIndex build_index(const FeatureMatrix& x, const GbrtParams& p) {
  SplitIndex idx;
  idx.exact = x.rows() <= p.exact_max_rows;
  idx.cols = x.cols();
  const size_t n = x.rows();
  if (idx.exact) {
    idx.sorted.resize(x.cols());
    idx.sorted_values.resize(x.cols());
    parallel_for(x.cols(), [&](size_t begin, size_t end) {
      for (size_t f = begin; f < end; ++f) {
        auto col = x.col(f);
        auto& order = idx.sorted[f];
        order.resize(n);
        std::iota(order.begin(), order.end(), 0u);
        std::stable_sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) { return col[a] < col[b]; });
        auto& values = idx.sorted_values[f];
        values.resize(n);
        for (size_t i = 0; i < n; ++i) values[i] = col[order[i]];
      }
    });
    return idx;
  }
  idx.rows = n;
  idx.codes.assign(n * ((x.cols() + kBlock - 1) / kBlock) * kBlock, 0);
  idx.cuts.resize(x.cols());
  // Quantiles come from an evenly strided sample of the rows.
  const size_t stride = (n + kQuantileSample - 1) / kQuantileSample;
  const size_t m = (n + stride - 1) / stride;
  parallel_for(x.cols(), [&](size_t begin, size_t end) {
    std::vector<double> v(m), padded(255);
    for (size_t f = begin; f < end; ++f) {
      auto col = x.col(f);
      for (size_t i = 0; i < m; ++i) v[i] = col[i * stride];
      std::sort(v.begin(), v.end());
      auto& cuts = idx.cuts[f];
      for (int q = 1; q < p.hist_bins; ++q) {
        const size_t pos = q * m / static_cast<size_t>(p.hist_bins);
        if (pos == 0 || pos >= m || !(v[pos - 1] < v[pos])) continue;
        double t = v[pos - 1] + (v[pos] - v[pos - 1]) / 2;
        if (!(t < v[pos])) t = v[pos - 1];
        if (cuts.empty() || cuts.back() < t) cuts.push_back(t);
      }
      // Branchless lower_bound over the cuts padded to 255 entries.
      std::fill(padded.begin(), padded.end(), std::numeric_limits<double>::infinity());
      std::copy(cuts.begin(), cuts.end(), padded.begin());
      uint8_t* codes = idx.codes.data() + (f / kBlock) * n * kBlock + f % kBlock;
      for (size_t r = 0; r < n; ++r) {
        const double v = col[r];
        size_t pos = 0;
        for (size_t step = 128; step > 0; step /= 2) pos += padded[pos + step - 1] < v ? step : 0;
        codes[r * kBlock] = static_cast<uint8_t>(pos);
      }
    }
  });
  idx.offsets.resize(x.cols());
  for (size_t f = 0; f < x.cols(); ++f) {
    idx.offsets[f] = idx.total_bins;
    idx.total_bins += idx.cuts[f].size() + 1;
  }
  return idx;
}

double gain_of(double gl, double hl, double gr, double hr, double g, double h, const GbrtParams& p) {
  return 0.5 * (gl * gl / (hl + p.lambda) + gr * gr / (hr + p.lambda) - g * g / (h + p.lambda)) - p.gamma;
}

void consider(Candidate& best, double gl, double hl, const BuildNode& node, double threshold, const GbrtParams& p) {
  const double hr = node.h - hl;
  if (hl < p.min_child_weight || hr < p.min_child_weight) return;
  const double gain = gain_of(gl, hl, node.g - gl, hr, node.g, node.h, p);
  if (!best.valid || gain > best.gain) best = {gain, threshold, true};
}

struct RowState {
  double grad;
  int32_t slot;  // active node slot, or -1
};

void scan_exact(const SplitIndex& index, const GbrtParams& p, std::span<const RowState> rows,
                std::span<const BuildNode* const> active, size_t f, std::span<Candidate> best) {
  const size_t k = active.size();
  std::vector<double> gl(k, 0.0), hl(k, 0.0), last(k, 0.0);
  std::vector<char> seen(k, 0);
  const auto& order = index.sorted[f];
  const auto& values = index.sorted_values[f];
  for (size_t i = 0; i < order.size(); ++i) {
    const RowState st = rows[order[i]];
    if (st.slot < 0) continue;
    const size_t s = static_cast<size_t>(st.slot);
    const double v = values[i];
    if (seen[s] && v > last[s]) {
      double t = last[s] + (v - last[s]) / 2;
      if (!(t < v)) t = last[s];
      consider(best[s], gl[s], hl[s], *active[s], t, p);
    }
    gl[s] += st.grad;
    hl[s] += 1.0;
    last[s] = v;
    seen[s] = 1;
  }
}

// Interleaved (gradient sum, count) per bin.
using Histogram = std::vector<double>;

void build_hist(const SplitIndex& index, std::span<const double> grad, std::span<const uint32_t> rows, Histogram& h) {
  h.assign(2 * index.total_bins, 0.0);
  double* out = h.data();
  const size_t blocks = (index.cols + kBlock - 1) / kBlock;
  parallel_for(blocks, [&](size_t begin, size_t end) {
    for (size_t blk = begin; blk < end; ++blk) {
      const size_t f0 = blk * kBlock;
      const size_t width = std::min(kBlock, index.cols - f0);
      const size_t* off = index.offsets.data() + f0;
      const uint8_t* block = index.codes.data() + f0 * index.rows;
      for (uint32_t r : rows) {
        const uint8_t* c = block + static_cast<size_t>(r) * kBlock;
        const double g = grad[r];
        for (size_t j = 0; j < width; ++j) {
          double* b = out + 2 * (off[j] + c[j]);
          b[0] += g;
          b[1] += 1.0;
        }
      }
    }
  });
}

// Features ascending, bins ascending, strict improvement only: ties keep the
// lowest feature and then the lowest threshold.
void scan_hist(const SplitIndex& index, const GbrtParams& p, const Histogram& h, const BuildNode& node,
               Candidate& best, int32_t& best_f) {
  for (size_t f = 0; f < index.cols; ++f) {
    const auto& cuts = index.cuts[f];
    const double* b = h.data() + 2 * index.offsets[f];
    double gl = 0.0, hl = 0.0;
    for (size_t k = 0; k < cuts.size(); ++k) {
      gl += b[2 * k];
      hl += b[2 * k + 1];
      if (hl == 0.0 || hl == node.h) continue;
      const bool had = best.valid;
      const double before = best.gain;
      consider(best, gl, hl, node, cuts[k], p);
      if (best.valid && (!had || best.gain > before)) best_f = static_cast<int32_t>(f);
    }
  }
}

Tree to_preorder(const std::vector<BuildNode>& built, double lambda) {
  Tree tree;
  std::function<int32_t(int32_t)> emit = [&](int32_t i) -> int32_t {
    const BuildNode& b = built[i];
    const auto at = static_cast<int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (b.feature < 0) {
      const double denom = b.h + lambda;
      tree.nodes[at].value = denom > 0.0 ? -b.g / denom : 0.0;
      return at;
    }
    tree.nodes[at].feature = b.feature;
    tree.nodes[at].value = b.threshold;
    const int32_t l = emit(b.left);
    const int32_t r = emit(b.right);
    tree.nodes[at].left = l;
    tree.nodes[at].right = r;
    return at;
  };
  emit(0);
  return tree;
}

Tree grow_tree(const FeatureMatrix& x, const SplitIndex& index, const GbrtParams& p,
               std::span<const double> grad, std::span<const char> sampled) {
  const size_t n = x.rows();
  std::vector<BuildNode> built(1);
  std::vector<std::vector<uint32_t>> rows_of(1);
  for (size_t r = 0; r < n; ++r) {
    if (!sampled[r]) continue;
    rows_of[0].push_back(static_cast<uint32_t>(r));
    built[0].g += grad[r];
    built[0].h += 1.0;
  }
  std::vector<int32_t> active{0};
  std::vector<Histogram> hists;
  if (!index.exact && p.max_depth > 0) {
    hists.resize(1);
    build_hist(index, grad, rows_of[0], hists[0]);
  }
  std::vector<RowState> state;
  if (index.exact) state.resize(n);

  for (int depth = 0; depth < p.max_depth && !active.empty(); ++depth) {
    const size_t k = active.size();
    std::vector<Candidate> best(k);
    std::vector<int32_t> best_f(k, -1);
    if (index.exact) {
      for (size_t r = 0; r < n; ++r) state[r] = {grad[r], -1};
      for (size_t s = 0; s < k; ++s)
        for (uint32_t r : rows_of[active[s]]) state[r].slot = static_cast<int32_t>(s);
      std::vector<const BuildNode*> nodes;
      for (int32_t a : active) nodes.push_back(&built[a]);
      std::vector<Candidate> per_feature(x.cols() * k);
      parallel_for(x.cols(), [&](size_t begin, size_t end) {
        for (size_t f = begin; f < end; ++f)
          scan_exact(index, p, state, nodes, f, std::span<Candidate>(per_feature.data() + f * k, k));
      });
      // Lowest feature wins ties; within a feature the scan already kept the lowest threshold.
      for (size_t s = 0; s < k; ++s)
        for (size_t f = 0; f < x.cols(); ++f) {
          const Candidate& c = per_feature[f * k + s];
          if (c.valid && (!best[s].valid || c.gain > best[s].gain)) {
            best[s] = c;
            best_f[s] = static_cast<int32_t>(f);
          }
        }
    } else {
      parallel_for(k, [&](size_t begin, size_t end) {
        for (size_t s = begin; s < end; ++s) scan_hist(index, p, hists[s], built[active[s]], best[s], best_f[s]);
      });
    }

    std::vector<int32_t> next;
    std::vector<size_t> split_slots;
    for (size_t s = 0; s < k; ++s) {
      if (!best[s].valid || !(best[s].gain > 0.0)) continue;
      const int32_t parent = active[s];
      const auto left = static_cast<int32_t>(built.size());
      built.emplace_back();
      built.emplace_back();
      rows_of.emplace_back();
      rows_of.emplace_back();
      BuildNode& pn = built[parent];
      pn.feature = best_f[s];
      pn.threshold = best[s].threshold;
      pn.left = left;
      pn.right = left + 1;
      auto col = x.col(static_cast<size_t>(pn.feature));
      for (uint32_t r : rows_of[parent]) {
        const int32_t child = col[r] <= pn.threshold ? left : left + 1;
        rows_of[child].push_back(r);
        built[child].g += grad[r];
        built[child].h += 1.0;
      }
      next.push_back(left);
      next.push_back(left + 1);
      split_slots.push_back(s);
    }

    if (!index.exact && depth + 1 < p.max_depth) {
      // Build the smaller child directly, derive its sibling from the parent.
      std::vector<Histogram> child_hists(next.size());
      {
        for (size_t i = 0; i < split_slots.size(); ++i) {
          const int32_t l = next[2 * i], r = next[2 * i + 1];
          const bool left_small = rows_of[l].size() <= rows_of[r].size();
          Histogram& small = child_hists[2 * i + (left_small ? 0 : 1)];
          Histogram& big = child_hists[2 * i + (left_small ? 1 : 0)];
          build_hist(index, grad, rows_of[left_small ? l : r], small);
          const Histogram& parent = hists[split_slots[i]];
          big.resize(parent.size());
          for (size_t b = 0; b < parent.size(); ++b) big[b] = parent[b] - small[b];
        }
      }
      hists = std::move(child_hists);
    }
    for (int32_t a : active) std::vector<uint32_t>().swap(rows_of[a]);
    active = std::move(next);
  }
  return to_preorder(built, p.lambda);
}

}  // namespace

GbrtModel fit_gbrt(const FeatureMatrix& x, std::span<const double> y, const GbrtParams& params,
                   uint64_t seed, GbrtTrace* trace) {
  params.validate();
  if (x.rows() != y.size()) throw Error(ErrorKind::Shape, "gbrt: row count mismatch");
  if (x.rows() < 2) throw Error(ErrorKind::InsufficientData, "gbrt: needs at least 2 rows");
  x.check_finite();
  for (double v : y)
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidInput, "gbrt: non-finite target");

  const size_t n = x.rows();
  const SplitIndex index = build_index(x, params);

  GbrtModel model;
  model.params = params;
  model.base_score = 0.0;
  std::vector<double> pred(n, model.base_score), grad(n);
  std::vector<char> sampled(n, 1);
  Rng rng(seed);

  for (int round = 0; round < params.rounds; ++round) {
    for (size_t r = 0; r < n; ++r) grad[r] = pred[r] - y[r];
    if (params.subsample < 1.0)
      for (size_t r = 0; r < n; ++r) sampled[r] = rng.uniform() < params.subsample ? 1 : 0;

    model.trees.push_back(grow_tree(x, index, params, grad, sampled));
    const Tree& tree = model.trees.back();
    double sse = 0.0;
    for (size_t r = 0; r < n; ++r) {
      pred[r] += params.learning_rate * tree.leaf_value(x, r);
      sse += (pred[r] - y[r]) * (pred[r] - y[r]);
    }
    if (trace) trace->train_mse.push_back(sse / static_cast<double>(n));
  }
  return model;
}

}  // namespace gusl
