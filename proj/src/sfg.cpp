#include "sfg.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <functional>
#include <set>
#include <string>

#include "common.hpp"

namespace gusl {

std::vector<PathSubset> path_subsets(const GbrtModel& model) {
  std::vector<PathSubset> out;
  std::set<std::vector<uint32_t>> seen;
  for (size_t t = 0; t < model.trees.size(); ++t) {
    const Tree& tree = model.trees[t];
    std::vector<uint32_t> path;
    std::function<void(int32_t)> walk = [&](int32_t i) {
      const TreeNode& node = tree.nodes[i];
      if (node.is_leaf()) {
        if (path.empty()) return;
        std::vector<uint32_t> key = path;
        std::sort(key.begin(), key.end());
        if (seen.insert(key).second) out.push_back({path, t, i});
        return;
      }
      const auto f = static_cast<uint32_t>(node.feature);
      const bool fresh = std::find(path.begin(), path.end(), f) == path.end();
      if (fresh) path.push_back(f);
      walk(node.left);
      walk(node.right);
      if (fresh) path.pop_back();
    };
    if (!tree.nodes.empty()) walk(0);
  }
  return out;
}

std::vector<PathSubset> extract_subsets(const FeatureMatrix& x, std::span<const double> y,
                                        const GbrtParams& aux, uint64_t seed, GbrtModel* fitted) {
  if (x.rows() == 0 || x.cols() == 0) throw Error(ErrorKind::InvalidInput, "extract_subsets on empty matrix");
  if (aux.max_depth < 1) throw Error(ErrorKind::InvalidConfig, "extract_subsets needs depth >= 1");
  GbrtModel model = fit_gbrt(x, y, aux, seed);
  auto subsets = path_subsets(model);
  if (fitted) *fitted = std::move(model);
  return subsets;
}

LntProjection fit_lnt(const FeatureMatrix& x, std::span<const double> y,
                      std::span<const uint32_t> subset, double ridge,
                      std::span<const uint32_t> rows) {
  if (subset.empty()) throw Error(ErrorKind::InvalidInput, "fit_lnt: empty subset");
  if (x.rows() != y.size()) throw Error(ErrorKind::Shape, "fit_lnt: row count mismatch");
  for (uint32_t c : subset)
    if (c >= x.cols()) throw Error(ErrorKind::Shape, "fit_lnt: column index out of range");

  std::vector<uint32_t> all;
  if (rows.empty()) {
    all.resize(x.rows());
    for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<uint32_t>(i);
    rows = all;
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto k = static_cast<Eigen::Index>(subset.size());
  if (n <= k) throw Error(ErrorKind::InsufficientData, "fit_lnt: needs more rows than subset columns");

  Eigen::MatrixXd a(n, k);
  Eigen::VectorXd b(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    b(i) = y[rows[i]];
    for (Eigen::Index j = 0; j < k; ++j) a(i, j) = x.at(rows[i], subset[j]);
  }
  const Eigen::RowVectorXd x_mean = a.colwise().mean();
  const double y_mean = b.mean();
  a.rowwise() -= x_mean;
  b.array() -= y_mean;

  Eigen::MatrixXd gram = a.transpose() * a;
  const Eigen::VectorXd rhs = a.transpose() * b;
  Eigen::VectorXd w;

  Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  const bool well_posed = ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.rcond() > 1e-12;
  if (well_posed) {
    w = ldlt.solve(rhs);
  } else {
    double eps = ridge;
    if (eps < 0.0) eps = std::max(1e-8 * gram.trace() / static_cast<double>(k), 1e-12);
    gram.diagonal().array() += eps;
    Eigen::LDLT<Eigen::MatrixXd> reg(gram);
    if (reg.info() != Eigen::Success || !reg.isPositive())
      throw Error(ErrorKind::NumericalFailure, "fit_lnt: singular system even with ridge");
    w = reg.solve(rhs);
  }
  if (!w.allFinite()) throw Error(ErrorKind::NumericalFailure, "fit_lnt: non-finite solution");

  LntProjection p;
  p.subset.assign(subset.begin(), subset.end());
  p.weights.assign(w.data(), w.data() + k);
  p.intercept = y_mean - x_mean.dot(w);
  return p;
}

namespace {

std::vector<uint32_t> rows_reaching(const FeatureMatrix& x, const Tree& tree, int32_t leaf) {
  std::vector<uint32_t> rows;
  for (size_t r = 0; r < x.rows(); ++r) {
    int32_t at = 0;
    while (!tree.nodes[at].is_leaf()) {
      const TreeNode& n = tree.nodes[at];
      at = x.at(r, static_cast<size_t>(n.feature)) <= n.value ? n.left : n.right;
    }
    if (at == leaf) rows.push_back(static_cast<uint32_t>(r));
  }
  return rows;
}

}  // namespace

SfgFit fit_sfg(const FeatureMatrix& x, std::span<const double> y, const SfgParams& params,
               uint64_t seed) {
  GbrtModel aux;
  const auto subsets = extract_subsets(x, y, params.aux, seed, &aux);
  SfgFit fit;
  fit.model.source_dims = x.cols();
  fit.degenerate = subsets.empty();
  fit.model.projections.resize(subsets.size());
  parallel_for(subsets.size(), [&](size_t begin, size_t end) {
    for (size_t i = begin; i < end; ++i) {
      const PathSubset& s = subsets[i];
      std::vector<uint32_t> rows;
      if (params.leaf_rows_only) {
        rows = rows_reaching(x, aux.trees[s.tree], s.leaf);
        if (rows.size() <= s.features.size() + 1) rows.clear();
      }
      fit.model.projections[i] = fit_lnt(x, y, s.features, -1.0, rows);
    }
  });
  return fit;
}

FeatureMatrix generate(const FeatureMatrix& x, const SfgModel& model) {
  FeatureMatrix out(x.rows(), model.projections.size());
  for (size_t p = 0; p < model.projections.size(); ++p) {
    const LntProjection& proj = model.projections[p];
    if (proj.weights.size() != proj.subset.size()) throw Error(ErrorKind::InvalidModel, "LNT weight count mismatch");
    for (uint32_t c : proj.subset)
      if (c >= x.cols()) throw Error(ErrorKind::Shape, "generate: projection column out of range");
    auto dst = out.col(p);
    std::fill(dst.begin(), dst.end(), proj.intercept);
    for (size_t j = 0; j < proj.subset.size(); ++j) {
      auto src = x.col(proj.subset[j]);
      const double w = proj.weights[j];
      for (size_t r = 0; r < x.rows(); ++r) dst[r] += w * src[r];
    }
    out.meta()[p] = {FeatureSource::Lnt, static_cast<int>(p), 0, 0};
  }
  return out;
}

}  // namespace gusl
