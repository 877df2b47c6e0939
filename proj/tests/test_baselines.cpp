#include "stbench/baselines.hpp"
#include "stbench/rng.hpp"

#include <doctest.h>

#include <limits>

using namespace stb;

TEST_CASE("naive baseline copies the extremes to every variable") {
  MaskCube ex({1, 4, 3, 3});
  CHECK((naive_baseline(ex, 3).array() == 0).all());
  ex(0, 2, 1, 1) = 1;
  const MaskCube p = naive_baseline(ex, 3);
  CHECK(p.dims() == Dims{3, 4, 3, 3});
  for (Index v = 0; v < 3; ++v) CHECK((p.variable(v) == ex.variable(0)).all());
}

TEST_CASE("z-score detector thresholds the absolute value") {
  FloatCube x({1, 1, 1, 4});
  x.array() << -2.0f, 0.5f, 3.5f, -0.1f;
  PixelMask valid = PixelMask::Ones(4);
  const double inf = std::numeric_limits<double>::infinity();
  CHECK((zscore_detector(x, valid, std::vector<double>{inf}).array() == 0).all());
  CHECK((zscore_detector(x, valid, std::vector<double>{0.0}).array() == 1).all());
  const MaskCube m = zscore_detector(x, valid, std::vector<double>{1.0});
  CHECK(m.array()[0] == 1);
  CHECK(m.array()[1] == 0);
  CHECK(m.array()[2] == 1);
  valid[2] = 0;
  CHECK(zscore_detector(x, valid, std::vector<double>{1.0}).array()[2] == 0);
}

TEST_CASE("a five sigma spike is the only voxel above three") {
  Rng r(1, "spike");
  FloatCube x({1, 200, 5, 5});
  for (Index i = 0; i < x.size(); ++i) x.array()[i] = static_cast<float>(std::clamp(r.normal(), -2.9, 2.9));
  x(0, 77, 2, 3) = 5.0f;
  const MaskCube m = zscore_detector(x, PixelMask::Ones(25), std::vector<double>{3.0});
  CHECK(m.array().cast<int>().sum() == 1);
  CHECK(m(0, 77, 2, 3) == 1);
}

TEST_CASE("z-score masks shrink as the threshold grows") {
  Rng r(2, "mono");
  FloatCube x({2, 30, 4, 4});
  for (Index i = 0; i < x.size(); ++i) x.array()[i] = static_cast<float>(r.normal());
  Eigen::Array<std::uint8_t, Eigen::Dynamic, 1> prev;
  for (double thr : {0.0, 0.5, 1.0, 2.0, 4.0}) {
    const MaskCube m = zscore_detector(x, PixelMask::Ones(16), std::vector<double>{thr, thr});
    if (prev.size()) CHECK(((m.array() == 0) || (prev == 1)).all());
    prev = m.array();
  }
}

TEST_CASE("median thresholds") {
  CHECK(threshold_from_medians(std::vector<double>{2.0}, std::vector<double>{0.0}) == 1.0);
  CHECK(threshold_from_medians(std::vector<double>{4, 6, 8}, std::vector<double>{0, 0, 0}) == 3.0);
  CHECK(threshold_from_medians(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2, 3}) == 2.0);
  CHECK(median({4, 1, 3, 2}) == 2.5);
  CHECK_THROWS_WITH_AS(threshold_from_medians(std::vector<double>{}, std::vector<double>{1.0}),
                       doctest::Contains("quantile"), StbError);
}

TEST_CASE("z-score thresholds come from the training range only") {
  FloatCube x({1, 4, 1, 2});
  MaskCube ex({1, 4, 1, 2});
  x.array() << 0, 0, 4, 0, 100, 100, 100, 100;
  ex(0, 1, 0, 0) = 1;
  x(0, 1, 0, 0) = 4;
  const auto thr = zscore_thresholds(x, ex, PixelMask::Ones(2), 0, 2);
  CHECK(thr[0] == 2.0);
}

TEST_CASE("isolation features are the value and signed differences") {
  FloatCube x({3, 1, 1, 1});
  x.array() << 1.0f, 4.0f, -2.0f;
  double f[3];
  iforest_features(x, 1, 0, 0, f);
  CHECK(f[0] == 4.0);
  CHECK(f[1] == 3.0);
  CHECK(f[2] == 6.0);
}

TEST_CASE("isolation detector flags roughly the extreme ratio on normal data") {
  Rng r(3, "ifd");
  const Dims d{2, 60, 10, 10};
  FloatCube x(d);
  for (Index i = 0; i < x.size(); ++i) x.array()[i] = static_cast<float>(r.normal());
  MaskCube ex({1, d.time, d.lat, d.lon});
  for (Index i = 0; i < ex.size(); ++i) ex.array()[i] = r.bernoulli(0.05) ? 1 : 0;
  IsolationDetectorOptions opts;
  opts.forest.n_trees = 30;
  const PixelMask valid = PixelMask::Ones(100);
  const auto det = fit_isolation_detector(x, ex, valid, 0, 40, opts);
  CHECK(det.anomaly_ratio == doctest::Approx(ex.array().head(40 * 100).cast<double>().mean()));
  const MaskCube p = isolation_predict(det, x, valid, 40, 60);
  const double rate = p.array().cast<double>().mean();
  CHECK(rate > 0.01);
  CHECK(rate < 0.12);
  const MaskCube again = isolation_predict(fit_isolation_detector(x, ex, valid, 0, 40, opts), x, valid, 40, 60);
  CHECK(again == p);
}
