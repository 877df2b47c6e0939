#include "stbench/iforest.hpp"
#include "stbench/parallel.hpp"
#include "stbench/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace stb;

namespace {

Eigen::MatrixXd cluster(Index n, std::uint64_t seed) {
  Rng r(seed, "cluster");
  Eigen::MatrixXd x(n, 2);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = r.normal();
  return x;
}

}  // namespace

TEST_CASE("average path length matches the harmonic formula") {
  CHECK(average_path_length(1) == 0.0);
  CHECK(average_path_length(2) == 1.0);
  const double n = 256;
  const double h = std::log(n - 1) + 0.5772156649015329;
  CHECK(average_path_length(n) == doctest::Approx(2 * h - 2 * (n - 1) / n));
}

TEST_CASE("dense points score low and far outliers score high") {
  IsolationForest f;
  IsolationForest::Options o;
  o.seed = 1;
  f.fit(cluster(2000, 1), o);
  Eigen::VectorXd centre = Eigen::VectorXd::Zero(2), far(2);
  far << 100, 100;
  CHECK(f.score(centre) < 0.5);
  CHECK(f.score(far) > 0.6);
  CHECK(f.score(far) <= 1.0);
}

TEST_CASE("more trees give steadier scores") {
  const Eigen::MatrixXd x = cluster(1000, 2);
  Eigen::VectorXd probe(2);
  probe << 1.5, -1.0;
  auto spread = [&](int trees) {
    Eigen::ArrayXd s(20);
    for (int k = 0; k < 20; ++k) {
      IsolationForest f;
      f.fit(x, {trees, 256, static_cast<std::uint64_t>(k)});
      s[k] = f.score(probe);
    }
    return (s - s.mean()).square().mean();
  };
  CHECK(spread(100) < spread(1));
}

TEST_CASE("constant features give depth zero trees") {
  IsolationForest f;
  f.fit(Eigen::MatrixXd::Ones(50, 3), {10, 32, 0});
  for (const auto& t : f.trees()) CHECK(t.nodes.size() == 1);
  CHECK(std::isfinite(f.score(Eigen::VectorXd::Ones(3))));
}

TEST_CASE("fitting is deterministic across thread counts") {
  const Eigen::MatrixXd x = cluster(3000, 3);
  IsolationForest a, b;
  set_thread_count(1);
  a.fit(x, {50, 256, 9});
  set_thread_count(4);
  b.fit(x, {50, 256, 9});
  set_thread_count(1);
  CHECK(a.score_rows(x) == b.score_rows(x));
}
