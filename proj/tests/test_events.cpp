#include "stbench/events.hpp"
#include "stbench/parallel.hpp"

#include <doctest.h>

#include <cstdlib>
#include <set>
#include <tuple>

using namespace stb;

namespace {

EventSpec spec(EventKind k, int n, int sx, int sy, int sz, int s = 0, double os = 0.0) {
  EventSpec e;
  e.kind = k;
  e.n = n;
  e.sx = sx;
  e.sy = sy;
  e.sz = sz;
  e.s = s;
  e.os = os;
  return e;
}

std::set<std::tuple<int, int, int>> distinct(const std::vector<Voxel>& v) {
  std::set<std::tuple<int, int, int>> out;
  for (const auto& x : v) out.insert({x.t, x.y, x.x});
  return out;
}

}  // namespace

TEST_CASE("minimal events cover one voxel") {
  const Dims d{1, 50, 20, 20};
  for (int k = 0; k < 20; ++k) {
    Rng r(k, "one");
    CHECK(distinct(gen_event(spec(EventKind::Local, 1, 1, 1, 1), d, r)).size() == 1);
    CHECK(distinct(gen_event(spec(EventKind::Cube, 1, 1, 1, 1), d, r)).size() == 1);
  }
}

TEST_CASE("local events are one pixel with bounded duration") {
  const Dims d{1, 100, 20, 20};
  Rng r(2, "local");
  for (int k = 0; k < 50; ++k) {
    const auto vox = gen_event(spec(EventKind::Local, 1, 1, 1, 6), d, r);
    REQUIRE(!vox.empty());
    CHECK(vox.size() <= 6);
    for (const auto& v : vox) CHECK((v.y == vox[0].y && v.x == vox[0].x));
  }
}

TEST_CASE("cube events stay within their maximum extents") {
  const Dims d{1, 200, 60, 60};
  Rng r(3, "cube");
  for (int k = 0; k < 50; ++k) {
    const auto vox = gen_event(spec(EventKind::Cube, 1, 7, 5, 9), d, r);
    REQUIRE(!vox.empty());
    int t0 = 1 << 30, t1 = -1, y0 = 1 << 30, y1 = -1, x0 = 1 << 30, x1 = -1;
    for (const auto& v : vox) {
      t0 = std::min(t0, v.t), t1 = std::max(t1, v.t);
      y0 = std::min(y0, v.y), y1 = std::max(y1, v.y);
      x0 = std::min(x0, v.x), x1 = std::max(x1, v.x);
    }
    CHECK(t1 - t0 + 1 <= 9);
    CHECK(y1 - y0 + 1 <= 5);
    CHECK(x1 - x0 + 1 <= 7);
    CHECK(vox.size() == static_cast<std::size_t>((t1 - t0 + 1) * (y1 - y0 + 1) * (x1 - x0 + 1)));
  }
}

TEST_CASE("onset events run to the end of the series") {
  const Dims d{1, 500, 30, 30};
  Rng r(4, "onset");
  for (int k = 0; k < 20; ++k) {
    const auto vox = gen_event(spec(EventKind::Onset, 1, 3, 3, 1, 0, 0.5), d, r);
    REQUIRE(!vox.empty());
    int t0 = 1 << 30, t1 = -1;
    for (const auto& v : vox) t0 = std::min(t0, v.t), t1 = std::max(t1, v.t);
    CHECK(t1 == 499);
    CHECK(t0 >= 250);
    CHECK(t0 <= 250 + 10);
  }
}

TEST_CASE("random walks visit adjacent voxels in order") {
  const Dims d{1, 400, 40, 40};
  for (int k = 0; k < 30; ++k) {
    Rng r(k, "walk");
    const auto vox = gen_event(spec(EventKind::RandomWalk, 1, 1, 1, 1, 125), d, r);
    const auto n = distinct(vox).size();
    CHECK(n >= 1);
    CHECK(n <= 126);
    for (std::size_t i = 1; i < vox.size(); ++i) {
      const int dt = vox[i].t - vox[i - 1].t;
      const int dyx = std::abs(vox[i].y - vox[i - 1].y) + std::abs(vox[i].x - vox[i - 1].x);
      CHECK((dt == 0 || dt == 1));
      CHECK(dyx == 1);
    }
  }
}

TEST_CASE("extreme placement respects specs and validity") {
  const Dims d{1, 60, 20, 20};
  PixelMask valid = PixelMask::Ones(d.pixels());
  CHECK((place_extremes({}, d, valid, 1).array() == 0).all());

  const std::vector<EventSpec> specs{spec(EventKind::Cube, 10, 5, 5, 6)};
  std::vector<EventRecord> ledger;
  const MaskCube m = place_extremes(specs, d, valid, 1, &ledger);
  CHECK(m.array().cast<int>().sum() > 0);
  CHECK(ledger.size() == 10);

  valid.setZero();
  CHECK((place_extremes(specs, d, valid, 1).array() == 0).all());

  valid.setOnes();
  valid.head(200).setZero();
  const MaskCube half = place_extremes(specs, d, valid, 1);
  for (Index t = 0; t < d.time; ++t) CHECK((half.slice(0, t).head(200) == 0).all());
}

TEST_CASE("placement is identical across thread counts") {
  const Dims d{1, 100, 30, 30};
  const PixelMask valid = PixelMask::Ones(d.pixels());
  const std::vector<EventSpec> specs{spec(EventKind::Gaussian, 20, 8, 8, 6), spec(EventKind::RandomWalk, 10, 1, 1, 1, 50)};
  set_thread_count(1);
  const MaskCube a = place_extremes(specs, d, valid, 9);
  set_thread_count(5);
  const MaskCube b = place_extremes(specs, d, valid, 9);
  set_thread_count(1);
  CHECK(a == b);
}

TEST_CASE("coupling flags exactly the requested count") {
  Rng r(5, "coupling");
  for (int c = 0; c <= 6; ++c) {
    const auto m = build_coupling(6, c, 9, 4, r);
    int n = 0;
    for (const auto& e : m) {
      if (!e.coupled) {
        CHECK(e.delta == 0);
        continue;
      }
      ++n;
      CHECK((e.delta == 1 || e.delta == -1));
      CHECK(e.lead >= 1);
      CHECK(e.lead <= 9);
      CHECK(e.lag >= 0);
      CHECK(e.lag <= 4);
    }
    CHECK(n == c);
  }
  CHECK_THROWS_AS(build_coupling(3, 4, 1, 1, r), StbError);
}

TEST_CASE("configured deltas are preferred and kept") {
  Rng r(6, "deltas");
  const auto m = build_coupling(6, 2, 3, 3, r, {0, 1, 0, -1, 0, 0});
  CHECK(m[1].coupled);
  CHECK(m[1].delta == 1);
  CHECK(m[3].coupled);
  CHECK(m[3].delta == -1);
}

TEST_CASE("driver mask is the temporal dilation of the extremes") {
  MaskCube ex({1, 20, 2, 2});
  ex(0, 10, 1, 0) = 1;
  CouplingMatrix m(2);
  m[0] = {true, 1, 2, 1};
  const MaskCube a = derive_driver_mask(ex, m);
  for (Index t = 0; t < 20; ++t) {
    CHECK(a(0, t, 1, 0) == ((t >= 8 && t <= 11) ? 1 : 0));
    CHECK(a(0, t, 0, 0) == 0);
  }
  CHECK((a.variable(1) == 0).all());
}

TEST_CASE("larger lead and lag never remove drivers") {
  const Dims d{1, 80, 10, 10};
  const MaskCube ex = place_extremes({spec(EventKind::Cube, 8, 3, 3, 4)}, d, PixelMask::Ones(100), 4);
  CouplingMatrix small(1), big(1);
  small[0] = {true, 1, 2, 1};
  big[0] = {true, 1, 5, 3};
  const MaskCube a = derive_driver_mask(ex, small), b = derive_driver_mask(ex, big);
  CHECK(((a.array() == 0) || (b.array() == 1)).all());
  for (Index t = 0; t < d.time; ++t)
    for (Index p = 0; p < d.pixels(); ++p) {
      if (!b.slice(0, t)[p]) continue;
      bool near = false;
      for (Index tau = std::max<Index>(0, t - 3); tau <= std::min<Index>(d.time - 1, t + 5); ++tau)
        near = near || ex.slice(0, tau)[p];
      CHECK(near);
    }
}

TEST_CASE("random anomalies use a separate stream per variable") {
  const Dims d{2, 60, 20, 20};
  const std::vector<EventSpec> s{spec(EventKind::Cube, 5, 4, 4, 4)};
  const MaskCube m = place_random_anomalies({s, s}, d, PixelMask::Ones(d.pixels()), 3, {"a", "b"});
  CHECK_FALSE((m.variable(0) == m.variable(1)).all());
  CHECK((place_random_anomalies({{}, {}}, d, PixelMask::Ones(d.pixels()), 3, {"a", "b"}).array() == 0).all());
}

TEST_CASE("event specs parse, serialize and reject bad input") {
  const EventSpec s = event_spec_from_json({{"kind", "CubeEvent"}, {"n", 3}, {"sx", 4}, {"sy", 5}, {"sz", 6}});
  CHECK(s.kind == EventKind::Cube);
  CHECK(s.sy == 5);
  CHECK(event_spec_from_json(to_json(s)).sz == 6);
  CHECK_THROWS_AS(event_spec_from_json({{"kind", "Blob"}}), StbError);
  CHECK_THROWS_AS(event_spec_from_json({{"kind", "CubeEvent"}, {"n", -1}}), StbError);
  CHECK_THROWS_AS(event_spec_from_json({{"kind", "CubeEvent"}, {"size", 2}}), StbError);
  CHECK_THROWS_AS(event_spec_from_json({{"kind", "OnsetEvent"}, {"os", 1.5}}), StbError);
}
