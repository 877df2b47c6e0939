#pragma once

#include "stbench/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace stb {

/// Expected path length of an unsuccessful BST search over n points.
double average_path_length(double n);

struct IsolationNode {
  int feature = -1;  // -1 marks a leaf
  double split = 0.0;
  int left = -1;
  int right = -1;
  Index size = 0;  // training points that reached a leaf
};

struct IsolationTree {
  std::vector<IsolationNode> nodes;
  double path_length(const double* point) const;
};

class IsolationForest {
 public:
  struct Options {
    int n_trees = 100;
    Index subsample = 256;
    std::uint64_t seed = 0;
  };

  /// Rows of `points` are samples.
  void fit(const Eigen::MatrixXd& points, const Options& options);
  void fit(const Eigen::MatrixXd& points) { fit(points, Options{}); }

  /// 2^(-E[h(x)] / c(psi)), in (0, 1].
  double score(const double* point) const;
  double score(const Eigen::VectorXd& point) const { return score(point.data()); }
  Eigen::VectorXd score_rows(const Eigen::MatrixXd& points) const;

  const std::vector<IsolationTree>& trees() const { return trees_; }

 private:
  std::vector<IsolationTree> trees_;
  double norm_ = 1.0;
};

}  // namespace stb
