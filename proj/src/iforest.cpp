#include "stbench/iforest.hpp"

#include "stbench/parallel.hpp"
#include "stbench/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace stb {

double average_path_length(double n) {
  if (n <= 1.0) return 0.0;
  if (n <= 2.0) return 1.0;
  constexpr double kEulerGamma = 0.5772156649015329;
  return 2.0 * (std::log(n - 1.0) + kEulerGamma) - 2.0 * (n - 1.0) / n;
}

double IsolationTree::path_length(const double* point) const {
  int at = 0;
  double depth = 0.0;
  while (nodes[static_cast<std::size_t>(at)].feature >= 0) {
    const auto& n = nodes[static_cast<std::size_t>(at)];
    at = point[n.feature] < n.split ? n.left : n.right;
    depth += 1.0;
  }
  return depth + average_path_length(static_cast<double>(nodes[static_cast<std::size_t>(at)].size));
}

namespace {

struct Builder {
  const Eigen::MatrixXd& x;
  Rng& rng;
  int height_limit;
  IsolationTree tree;

  int grow(std::vector<Index>& rows, std::size_t lo, std::size_t hi, int depth) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.push_back({});
    const auto n = static_cast<Index>(hi - lo);
    if (depth >= height_limit || n <= 1) {
      tree.nodes[static_cast<std::size_t>(id)].size = n;
      return id;
    }
    // Features that still vary inside this node.
    std::vector<int> candidates;
    std::vector<std::pair<double, double>> range;
    for (int f = 0; f < x.cols(); ++f) {
      double mn = x(rows[lo], f), mx = mn;
      for (std::size_t i = lo + 1; i < hi; ++i) {
        mn = std::min(mn, x(rows[i], f));
        mx = std::max(mx, x(rows[i], f));
      }
      if (mx > mn) {
        candidates.push_back(f);
        range.emplace_back(mn, mx);
      }
    }
    if (candidates.empty()) {
      tree.nodes[static_cast<std::size_t>(id)].size = n;
      return id;
    }
    const auto pick = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(candidates.size()) - 1));
    const int f = candidates[pick];
    const double split = rng.uniform(range[pick].first, range[pick].second);
    const auto mid = std::partition(rows.begin() + static_cast<std::ptrdiff_t>(lo), rows.begin() + static_cast<std::ptrdiff_t>(hi),
                                    [&](Index r) { return x(r, f) < split; }) -
                     rows.begin();
    const int left = grow(rows, lo, static_cast<std::size_t>(mid), depth + 1);
    const int right = grow(rows, static_cast<std::size_t>(mid), hi, depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(id)];
    node.feature = f;
    node.split = split;
    node.left = left;
    node.right = right;
    return id;
  }
};

}  // namespace

void IsolationForest::fit(const Eigen::MatrixXd& points, const Options& options) {
  if (points.rows() == 0) throw StbError("isolation forest: no training points");
  if (options.n_trees < 1 || options.subsample < 1) throw StbError("isolation forest: bad options");
  const Index psi = std::min<Index>(options.subsample, points.rows());
  const int height_limit = static_cast<int>(std::ceil(std::log2(std::max<double>(2.0, static_cast<double>(psi)))));
  trees_.assign(static_cast<std::size_t>(options.n_trees), {});
  parallel_for(options.n_trees, [&](std::ptrdiff_t t) {
    Rng rng(options.seed, "iforest-tree", static_cast<std::uint64_t>(t));
    std::vector<Index> all(static_cast<std::size_t>(points.rows()));
    std::iota(all.begin(), all.end(), Index{0});
    // Partial Fisher-Yates: the first psi entries become the subsample.
    for (Index i = 0; i < psi; ++i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(i, points.rows() - 1));
      std::swap(all[static_cast<std::size_t>(i)], all[j]);
    }
    all.resize(static_cast<std::size_t>(psi));
    Builder b{points, rng, height_limit, {}};
    b.grow(all, 0, all.size(), 0);
    trees_[static_cast<std::size_t>(t)] = std::move(b.tree);
  });
  norm_ = average_path_length(static_cast<double>(psi));
  if (norm_ <= 0) norm_ = 1.0;
}

double IsolationForest::score(const double* point) const {
  if (trees_.empty()) throw StbError("isolation forest: not fitted");
  double sum = 0.0;
  for (const auto& t : trees_) sum += t.path_length(point);
  return std::exp2(-(sum / static_cast<double>(trees_.size())) / norm_);
}

Eigen::VectorXd IsolationForest::score_rows(const Eigen::MatrixXd& points) const {
  Eigen::VectorXd out(points.rows());
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = points;
  parallel_for(points.rows(), [&](std::ptrdiff_t i) { out[i] = score(rows.row(i).data()); });
  return out;
}

}  // namespace stb
