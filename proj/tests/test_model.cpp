#include "fixtures.hpp"
#include "stbench/parallel.hpp"

#include <doctest.h>

#include <filesystem>
#include <limits>

using namespace stb;
using namespace stb::testing;

namespace {

MicroModel random_model(Index vars, std::uint64_t seed, double spread = 0.5) {
  ModelHyper hp;
  hp.seed = seed;
  MicroModel m = init_model(vars, hp);
  Rng r(seed, "random-model");
  for (Index i = 0; i < m.params.size(); ++i) m.params[i] = r.uniform(-spread, spread);
  return m;
}

struct Toy {
  FloatCube values;
  MaskCube extremes;
  PixelMask valid;
};

Toy toy_data(Index vars, Index T, Index L, std::uint64_t seed) {
  Toy d{FloatCube({vars, T, L, L}), MaskCube({1, T, L, L}), PixelMask::Ones(L * L)};
  Rng r(seed, "toy");
  for (Index i = 0; i < d.values.size(); ++i) d.values.array()[i] = static_cast<float>(r.normal());
  for (Index i = 0; i < d.extremes.size(); ++i) d.extremes.array()[i] = r.bernoulli(0.1) ? 1 : 0;
  d.valid[0] = 0;
  return d;
}

Window toy_window(const Toy& d, Index t0, Index L) {
  return make_window(d.values, &d.extremes, d.valid, t0, 0, 0, L, L, 6);
}

void swap_blocks(MicroModel& m, const ParamBlock& a, const ParamBlock& b) {
  REQUIRE(a.size() == b.size());
  m.params.segment(a.offset, a.size()).swap(m.params.segment(b.offset, b.size()));
}

}  // namespace

TEST_CASE("initialization is deterministic and keeps variables disjoint") {
  ModelHyper hp;
  hp.seed = 4;
  CHECK(parameter_hash(init_model(2, hp)) == parameter_hash(init_model(2, hp)));
  hp.seed = 5;
  CHECK(parameter_hash(init_model(2, hp)) != parameter_hash(init_model(2, ModelHyper{})));
  const MicroModel m = init_model(2, hp);
  for (int b = 0; b < kVarBlocks; ++b) {
    const auto& x = m.var_block(0, static_cast<VarBlock>(b));
    for (int c = 0; c < kVarBlocks; ++c) {
      const auto& y = m.var_block(1, static_cast<VarBlock>(c));
      CHECK((x.offset + x.size() <= y.offset || y.offset + y.size() <= x.offset));
    }
  }
  CHECK(m.map(m.var_block(0, kProj2W)).isZero());
  CHECK(m.map(m.var_block(0, kTemporalW)).cwiseAbs().maxCoeff() > 0);
}

TEST_CASE("forward shapes on an 8x8 window") {
  const MicroModel m = random_model(2, 1);
  const Toy d = toy_data(2, 20, 8, 1);
  const auto out = forward(m, toy_window(d, 10, 8));
  REQUIRE(out.q.size() == 2);
  CHECK(out.q[0].size() == 6 * 8 * 8);
  REQUIRE(out.prob.size() == 3);
  for (const auto& p : out.prob) {
    CHECK(p.size() == 64);
    CHECK((p > 0).all());
    CHECK((p < 1).all());
  }
}

TEST_CASE("an initialized model codes everything as normal") {
  ModelHyper hp;
  const MicroModel m = init_model(2, hp);
  Toy d = toy_data(2, 20, 8, 2);
  const auto out = forward(m, toy_window(d, 10, 8));
  for (const auto& z : out.z_l) CHECK((z == 0).all());
  for (const auto& q : out.q) CHECK((q == 0).all());
  const Inference inf = infer_drivers(m, d.values, d.valid, 6, 20);
  CHECK((inf.drivers.array() == 0).all());
}

TEST_CASE("swapping variables with their parameters leaves the multivariate head unchanged") {
  MicroModel m = random_model(2, 3);
  const Toy d = toy_data(2, 20, 8, 3);
  Window w = toy_window(d, 12, 8);
  const auto a = forward(m, w);
  for (int b = 0; b < kVarBlocks; ++b) swap_blocks(m, m.var_block(0, static_cast<VarBlock>(b)), m.var_block(1, static_cast<VarBlock>(b)));
  for (int b = 0; b < kHeadBlocks; ++b) swap_blocks(m, m.head_block(0, static_cast<HeadBlock>(b)), m.head_block(1, static_cast<HeadBlock>(b)));
  std::swap(w.inputs[0], w.inputs[1]);
  const auto b = forward(m, w);
  CHECK((a.prob[2] - b.prob[2]).abs().maxCoeff() < 1e-12);
  CHECK((a.prob[0] - b.prob[1]).abs().maxCoeff() == 0.0);
}

TEST_CASE("a variable's input reaches only its own head and the multivariate head") {
  const MicroModel m = random_model(3, 4);
  const Toy d = toy_data(3, 20, 8, 4);
  Window w = toy_window(d, 12, 8);
  const auto a = forward(m, w);
  w.inputs[0].setZero();
  const auto b = forward(m, w);
  CHECK((a.prob[1] == b.prob[1]).all());
  CHECK((a.prob[2] == b.prob[2]).all());
  CHECK_FALSE((a.prob[0] == b.prob[0]).all());
  CHECK_FALSE((a.prob[3] == b.prob[3]).all());
}

TEST_CASE("forward and loss do not depend on the thread count") {
  const GradFixture fx = grad_fixture(11);
  set_thread_count(1);
  const auto a = batch_loss(fx.model, fx.batch, true);
  set_thread_count(4);
  const auto b = batch_loss(fx.model, fx.batch, true);
  set_thread_count(1);
  CHECK(a.loss.total == b.loss.total);
  CHECK(a.grad == b.grad);
}

TEST_CASE("analytic gradients match central differences") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const GradFixture fx = grad_fixture(seed * 100);
    const GradCheck g = check_gradients(fx, 60, seed);
    CHECK(g.checked == 60);
    CHECK(g.worst_rel < 1e-4);
  }
}

TEST_CASE("the driver term vanishes when every pixel is in the footprint") {
  GradFixture fx = grad_fixture(7);
  for (auto& w : fx.batch) w.footprint.setOnes();
  MicroModel off = fx.model;
  off.hyper().lambdas.driver = 0.0;
  const auto a = batch_loss(fx.model, fx.batch, true), b = batch_loss(off, fx.batch, true);
  CHECK(a.loss.driver == 0.0);
  CHECK(a.loss.total == b.loss.total);
  CHECK(a.grad.segment(fx.model.code_offset().offset, fx.model.code_offset().size()) ==
        b.grad.segment(fx.model.code_offset().offset, fx.model.code_offset().size()));
}

TEST_CASE("full-series inference matches per-window forward passes") {
  const MicroModel m = random_model(2, 5);
  const Toy d = toy_data(2, 40, 8, 5);
  const Inference inf = infer_drivers(m, d.values, d.valid, 5, 40);
  int flagged = 0;
  for (Index t0 : {5, 6, 17, 33, 39}) {
    const Window w = toy_window(d, t0, 8);
    const auto out = forward(m, w);
    for (Index v = 0; v < 2; ++v) {
      const auto last = out.q[static_cast<std::size_t>(v)].tail(64).cast<int>();
      const auto got = inf.drivers.slice(v, t0 - 5).cast<int>();
      CHECK(((last * d.valid.cast<int>()) == got).all());
      flagged += got.sum();
    }
    const Eigen::ArrayXd p = inf.extreme_prob.slice(0, t0 - 5).cast<double>();
    for (Index px = 1; px < 64; ++px) CHECK(std::abs(p[px] - out.prob[2][px]) < 1e-6);
  }
  CHECK(flagged > 0);
}

TEST_CASE("inference without valid pixels is empty") {
  const MicroModel m = random_model(2, 6);
  Toy d = toy_data(2, 20, 6, 6);
  d.valid.setZero();
  const Inference inf = infer_drivers(m, d.values, d.valid, 0, 20);
  CHECK((inf.drivers.array() == 0).all());
  CHECK((inf.extreme_prob.array() == 0).all());
  CHECK_THROWS_AS(infer_drivers(m, slice_time(d.values, 0, 4), d.valid, 0, 4), StbError);
}

TEST_CASE("training is reproducible and zero steps change nothing") {
  const Toy d = toy_data(2, 60, 12, 7);
  ModelHyper hp;
  hp.tile = 8;
  hp.steps = 0;
  hp.seed = 3;
  MicroModel a = init_model(2, hp);
  const std::string before = parameter_hash(a);
  const TrainData data{&d.values, &d.extremes, &d.valid, 0, 50};
  CHECK(train(a, data).history.empty());
  CHECK(parameter_hash(a) == before);

  hp.steps = 6;
  MicroModel b = init_model(2, hp), c = init_model(2, hp);
  set_thread_count(1);
  const TrainReport rb = train(b, data);
  set_thread_count(3);
  train(c, data);
  set_thread_count(1);
  CHECK(rb.history.size() == 6);
  CHECK(parameter_hash(b) == parameter_hash(c));
  CHECK(parameter_hash(b) != before);
  CHECK((b.code().code(1) - b.code().code(0)).norm() > 0);
}

TEST_CASE("a NaN loss aborts training with the step index") {
  Toy d = toy_data(2, 30, 8, 8);
  d.values.array().setConstant(std::numeric_limits<float>::quiet_NaN());
  ModelHyper hp;
  hp.tile = 8;
  hp.steps = 3;
  MicroModel m = init_model(2, hp);
  const TrainData data{&d.values, &d.extremes, &d.valid, 0, 30};
  CHECK_THROWS_WITH_AS(train(m, data), doctest::Contains("step 0"), StbError);
}

TEST_CASE("checkpoints round trip and reject mismatched layouts") {
  const MicroModel m = random_model(3, 9);
  const auto dir = std::filesystem::temp_directory_path() / "stbench-tests";
  std::filesystem::create_directories(dir);
  save_checkpoint(m, dir / "m.ckpt");
  const MicroModel back = load_checkpoint(dir / "m.ckpt");
  CHECK(back.params == m.params);
  CHECK(parameter_hash(back) == parameter_hash(m));
  CHECK(back.hyper().window == m.hyper().window);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), StbError);
}
