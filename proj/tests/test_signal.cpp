#include "stbench/parallel.hpp"
#include "stbench/signal.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace stb;

namespace {

double mean(const Eigen::ArrayXd& x) { return x.mean(); }
double stddev(const Eigen::ArrayXd& x) { return std::sqrt((x - x.mean()).square().mean()); }

}  // namespace

TEST_CASE("constant base without gradient is zero") {
  BaseSpec b;
  b.kind = BaseKind::Constant;
  CHECK((gen_base(b, 5, 3, 2).array() == 0.0f).all());
}

TEST_CASE("sine base starts at the gradient and peaks at shift + amp") {
  BaseSpec b;
  b.kind = BaseKind::Sine;
  b.shift = 1.0;
  b.amp = 3.0;
  b.n_osc = 4;
  b.lat_grad = true;
  const Index T = 4 * 52, lat = 4;
  const Field f = gen_base(b, T, lat, 2);
  for (Index y = 0; y < lat; ++y) {
    const double grad = static_cast<double>(y) / lat;
    CHECK(f(0, 0, y, 1) == doctest::Approx(1.0 + grad).epsilon(1e-6));
    double peak = -1e9;
    for (Index t = 0; t < T; ++t) peak = std::max(peak, static_cast<double>(f(0, t, y, 0)));
    CHECK(std::abs(peak - (1.0 + 3.0 + grad)) < 1e-6);
  }
}

TEST_CASE("climatology base needs a path") {
  BaseSpec b;
  b.kind = BaseKind::FromClimatology;
  CHECK_THROWS_AS(validate(b), StbError);
}

TEST_CASE("weights are reproducible and have the right moments") {
  Rng a(3, "w"), b(3, "w");
  CHECK(sample_weights({}, 8, a) == sample_weights({}, 8, b));

  Rng r(4, "w");
  const Eigen::ArrayXd n = sample_weights({WeightDist::Norm, false}, 100000, r).array();
  CHECK(std::abs(mean(n)) < 0.02);
  CHECK(std::abs(stddev(n) - 1.0) < 0.02);

  const Eigen::ArrayXd l = sample_weights({WeightDist::Laplace, false}, 100000, r).array();
  const double s = stddev(l);
  const double kurt = (l - mean(l)).pow(4).mean() / (s * s * s * s) - 3.0;
  CHECK(std::abs(kurt - 3.0) < 0.5);
}

TEST_CASE("dependent coupling closed forms") {
  Field b1({1, 2, 2, 2}, 5.0f), b2({1, 2, 2, 2}, 2.0f);
  const Field* one[] = {&b1};
  CHECK((couple_dependent(one, Eigen::VectorXd::Ones(1), CouplingKind::Linear).array() == 5.0f).all());

  const Field* two_q[] = {&b2};
  const Field q = couple_dependent(two_q, Eigen::VectorXd::Ones(1), CouplingKind::Quadratic);
  CHECK(q(0, 1, 1, 1) == doctest::Approx(3.0 / std::numbers::sqrt2).epsilon(1e-6));

  const Field* same[] = {&b1, &b1};
  Eigen::VectorXd w(2);
  w << 1.0, -1.0;
  CHECK((couple_dependent(same, w, CouplingKind::Linear).array() == 0.0f).all());

  CHECK_THROWS_AS(couple_dependent(same, Eigen::VectorXd::Ones(3), CouplingKind::Linear), StbError);
}

TEST_CASE("linear coupling scales with the weights") {
  Rng r(6, "lin");
  Field b1({1, 3, 2, 2}), b2({1, 3, 2, 2});
  for (Index i = 0; i < b1.size(); ++i) {
    b1.array()[i] = static_cast<float>(r.normal());
    b2.array()[i] = static_cast<float>(r.normal());
  }
  const Field* bases[] = {&b1, &b2};
  Eigen::VectorXd w(2);
  w << 0.7, -1.3;
  const Field f = couple_dependent(bases, w, CouplingKind::Linear);
  const Field g = couple_dependent(bases, 2.5 * w, CouplingKind::Linear);
  CHECK((g.array() - 2.5f * f.array()).abs().maxCoeff() < 1e-5f);
}

TEST_CASE("disturbed weights scale by one and a half inside the mask") {
  Field b({1, 1, 1, 2}, 2.0f);
  MaskCube m({1, 1, 1, 2});
  m(0, 0, 0, 1) = 1;
  const Field* bases[] = {&b};
  const MaskCube* masks[] = {&m};
  const Field f = couple_dependent(bases, Eigen::VectorXd::Ones(1), CouplingKind::Linear, masks);
  CHECK(f(0, 0, 0, 0) == 2.0f);
  CHECK(f(0, 0, 0, 1) == 3.0f);
}

TEST_CASE("union of random masks") {
  const Dims d{1, 4, 10, 10};
  MaskCube zero(d), ones(d, 1);
  const MaskCube* z[] = {&zero, &zero};
  CHECK((union_random_masks(z).array() == 0).all());
  const MaskCube* o[] = {&zero, &ones};
  CHECK((union_random_masks(o).array() == 1).all());

  MaskCube a(d), b(d);
  a.array().head(100).setConstant(1);
  b.array().segment(99, 101).setConstant(1);
  const MaskCube* ab[] = {&a, &b};
  CHECK(union_random_masks(ab).array().cast<int>().sum() == 200);
}

TEST_CASE("white noise with tiny sigma collapses onto the mean") {
  NoiseSpec n;
  n.meu = 2.0;
  n.sigma = 1e-9;
  const Field f = gen_noise(n, 10, 4, 4, 1);
  CHECK((f.array() - 2.0f).abs().maxCoeff() < 1e-3f);
}

TEST_CASE("white noise std matches sigma") {
  NoiseSpec n;
  n.sigma = 0.5;
  const Field f = gen_noise(n, 100, 100, 100, 2);
  CHECK(std::abs(stddev(f.array().cast<double>()) / 0.5 - 1.0) < 0.01);
}

TEST_CASE("laplace noise uses scale sigma times lambda") {
  NoiseSpec n;
  n.kind = NoiseKind::Laplace;
  n.sigma = 0.7;
  n.lambda = 2.0;
  const Field f = gen_noise(n, 100, 50, 50, 3);
  CHECK(f.array().cast<double>().abs().mean() == doctest::Approx(1.4).epsilon(0.02));
}

TEST_CASE("red noise has the configured autocorrelation and marginal std") {
  NoiseSpec n;
  n.kind = NoiseKind::Red;
  n.sigma = 2.0;
  n.rho = 0.9;
  const Index T = 512, L = 64;
  const Field f = gen_noise(n, T, L, L, 4);
  const Eigen::ArrayXd x = f.array().cast<double>();
  CHECK(std::abs(stddev(x) / 2.0 - 1.0) < 0.02);
  const Index P = L * L;
  const Eigen::ArrayXd a = x.head((T - 1) * P) - x.mean(), b = x.tail((T - 1) * P) - x.mean();
  const double r1 = (a * b).mean() / std::sqrt(a.square().mean() * b.square().mean());
  CHECK(std::abs(r1 - 0.9) < 0.05);
}

TEST_CASE("noise is identical across thread counts") {
  NoiseSpec n;
  n.kind = NoiseKind::Red;
  set_thread_count(1);
  const Field a = gen_noise(n, 30, 16, 16, 77);
  set_thread_count(4);
  const Field b = gen_noise(n, 30, 16, 16, 77);
  set_thread_count(1);
  CHECK(a == b);
}
