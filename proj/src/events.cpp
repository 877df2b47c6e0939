#include "stbench/events.hpp"

#include "stbench/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace stb {

void validate(const EventSpec& spec) {
  if (spec.n < 0) throw StbError("event n must be >= 0");
  if (spec.os < 0.0 || spec.os > 1.0) throw StbError("event os must be in [0,1]");
  switch (spec.kind) {
    case EventKind::Cube:
    case EventKind::Gaussian:
      if (spec.sx < 1 || spec.sy < 1 || spec.sz < 1)
        throw StbError(to_string(spec.kind) + " extents must be >= 1");
      break;
    case EventKind::Local:
      if (spec.sz < 1) throw StbError("LocalEvent sz must be >= 1");
      break;
    case EventKind::Onset:
      if (spec.sx < 1 || spec.sy < 1) throw StbError("OnsetEvent extents must be >= 1");
      break;
    case EventKind::RandomWalk:
      if (spec.s < 0) throw StbError("RandomWalkEvent s must be >= 0");
      break;
  }
}

namespace {

void push_clipped(std::vector<Voxel>& out, const Dims& d, Index t, Index y, Index x) {
  if (t >= 0 && t < d.time && y >= 0 && y < d.lat && x >= 0 && x < d.lon)
    out.push_back({static_cast<std::int32_t>(t), static_cast<std::int32_t>(y), static_cast<std::int32_t>(x)});
}

// Extent in [1, max].
Index draw_extent(Rng& rng, int max) { return rng.uniform_int(1, std::max(1, max)); }

std::vector<Voxel> draw_once(const EventSpec& spec, const Dims& d, Rng& rng) {
  std::vector<Voxel> out;
  switch (spec.kind) {
    case EventKind::Cube: {
      const Index dt = draw_extent(rng, (spec.sz + 1) / 2);
      const Index dy = draw_extent(rng, spec.sy);
      const Index dx = draw_extent(rng, spec.sx);
      const Index t0 = rng.uniform_int(0, d.time - 1);
      const Index y0 = rng.uniform_int(0, d.lat - 1);
      const Index x0 = rng.uniform_int(0, d.lon - 1);
      for (Index t = t0; t < std::min(t0 + dt, d.time); ++t)
        for (Index y = y0; y < std::min(y0 + dy, d.lat); ++y)
          for (Index x = x0; x < std::min(x0 + dx, d.lon); ++x) push_clipped(out, d, t, y, x);
      break;
    }
    case EventKind::Local: {
      const Index dt = draw_extent(rng, spec.sz);
      const Index t0 = rng.uniform_int(0, d.time - 1);
      const Index y = rng.uniform_int(0, d.lat - 1);
      const Index x = rng.uniform_int(0, d.lon - 1);
      for (Index t = t0; t < std::min(t0 + dt, d.time); ++t) push_clipped(out, d, t, y, x);
      break;
    }
    case EventKind::Gaussian: {
      const double rt = rng.uniform(0.5, std::max(0.5, spec.sz / 4.0));
      const double ry = rng.uniform(0.5, std::max(0.5, spec.sy / 2.0));
      const double rx = rng.uniform(0.5, std::max(0.5, spec.sx / 2.0));
      const Index ct = rng.uniform_int(0, d.time - 1);
      const Index cy = rng.uniform_int(0, d.lat - 1);
      const Index cx = rng.uniform_int(0, d.lon - 1);
      const Index et = static_cast<Index>(rt), ey = static_cast<Index>(ry), ex = static_cast<Index>(rx);
      for (Index t = -et; t <= et; ++t)
        for (Index y = -ey; y <= ey; ++y)
          for (Index x = -ex; x <= ex; ++x) {
            const double r2 = (t / rt) * (t / rt) + (y / ry) * (y / ry) + (x / rx) * (x / rx);
            if (r2 <= 1.0) push_clipped(out, d, ct + t, cy + y, cx + x);
          }
      break;
    }
    case EventKind::Onset: {
      const double ry = rng.uniform(0.5, std::max(0.5, spec.sy / 2.0));
      const double rx = rng.uniform(0.5, std::max(0.5, spec.sx / 2.0));
      const Index cy = rng.uniform_int(0, d.lat - 1);
      const Index cx = rng.uniform_int(0, d.lon - 1);
      const Index jitter = rng.uniform_int(0, d.time / 50);
      const Index t0 = std::min<Index>(d.time - 1, std::llround(spec.os * static_cast<double>(d.time)) + jitter);
      const Index ey = static_cast<Index>(ry), ex = static_cast<Index>(rx);
      for (Index t = t0; t < d.time; ++t)
        for (Index y = -ey; y <= ey; ++y)
          for (Index x = -ex; x <= ex; ++x)
            if ((y / ry) * (y / ry) + (x / rx) * (x / rx) <= 1.0) push_clipped(out, d, t, cy + y, cx + x);
      break;
    }
    case EventKind::RandomWalk: {
      Index t = rng.uniform_int(0, d.time - 1);
      Index y = rng.uniform_int(0, d.lat - 1);
      Index x = rng.uniform_int(0, d.lon - 1);
      push_clipped(out, d, t, y, x);
      for (int step = 0; step < spec.s; ++step) {
        const bool along_lat = rng.bernoulli(0.5);
        const Index dir = rng.bernoulli(0.5) ? 1 : -1;
        const bool advance = rng.bernoulli(0.5);
        Index& coord = along_lat ? y : x;
        const Index extent = along_lat ? d.lat : d.lon;
        // Reflect at the grid border so consecutive voxels stay adjacent.
        if (extent > 1) coord = (coord + dir < 0 || coord + dir >= extent) ? coord - dir : coord + dir;
        if (advance) ++t;
        if (t >= d.time) break;
        if (out.back() == Voxel{static_cast<std::int32_t>(t), static_cast<std::int32_t>(y),
                                static_cast<std::int32_t>(x)})
          continue;
        push_clipped(out, d, t, y, x);
      }
      break;
    }
  }
  return out;
}

}  // namespace

std::vector<Voxel> gen_event(const EventSpec& spec, const Dims& dims, Rng& rng) {
  validate(spec);
  auto out = draw_once(spec, dims, rng);
  if (out.empty()) out = draw_once(spec, dims, rng);
  return out;
}

MaskCube place_events(const std::vector<EventSpec>& specs, const Dims& grid, const PixelMask& valid,
                      std::uint64_t seed, const std::string& purpose, const std::string& target,
                      std::vector<EventRecord>* ledger) {
  const Dims d{1, grid.time, grid.lat, grid.lon};
  if (valid.size() != d.pixels()) throw StbError("valid mask size does not match grid");
  MaskCube mask(d);

  struct Job { int spec, instance; };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    validate(specs[i]);
    for (int j = 0; j < specs[i].n; ++j) jobs.push_back({static_cast<int>(i), j});
  }

  // Chunked so the voxel lists of in-flight events stay bounded.
  constexpr std::size_t kChunk = 512;
  std::vector<std::vector<Voxel>> voxels(kChunk);
  for (std::size_t begin = 0; begin < jobs.size(); begin += kChunk) {
    const std::size_t count = std::min(kChunk, jobs.size() - begin);
    std::vector<std::uint64_t> keys(count);
    parallel_for(static_cast<std::ptrdiff_t>(count), [&](std::ptrdiff_t k) {
      const auto& job = jobs[begin + static_cast<std::size_t>(k)];
      keys[static_cast<std::size_t>(k)] =
          stream_key(seed, purpose, static_cast<std::uint64_t>(job.spec), static_cast<std::uint64_t>(job.instance));
      Rng rng(keys[static_cast<std::size_t>(k)]);
      voxels[static_cast<std::size_t>(k)] = gen_event(specs[static_cast<std::size_t>(job.spec)], d, rng);
    });
    for (std::size_t k = 0; k < count; ++k) {
      const auto& vs = voxels[k];
      for (const auto& v : vs) mask(0, v.t, v.y, v.x) = 1;
      if (ledger) {
        const auto& job = jobs[begin + k];
        EventRecord rec{target, specs[static_cast<std::size_t>(job.spec)].kind, job.spec, job.instance, keys[k],
                        vs.size(), {}, specs[static_cast<std::size_t>(job.spec)]};
        if (!vs.empty()) {
          rec.bbox = {vs[0].t, vs[0].t, vs[0].y, vs[0].y, vs[0].x, vs[0].x};
          for (const auto& v : vs) {
            rec.bbox[0] = std::min(rec.bbox[0], int(v.t));
            rec.bbox[1] = std::max(rec.bbox[1], int(v.t));
            rec.bbox[2] = std::min(rec.bbox[2], int(v.y));
            rec.bbox[3] = std::max(rec.bbox[3], int(v.y));
            rec.bbox[4] = std::min(rec.bbox[4], int(v.x));
            rec.bbox[5] = std::max(rec.bbox[5], int(v.x));
          }
        }
        ledger->push_back(rec);
      }
    }
  }

  for (Index t = 0; t < d.time; ++t) mask.slice(0, t) *= valid;
  return mask;
}

MaskCube place_extremes(const std::vector<EventSpec>& specs, const Dims& grid, const PixelMask& valid,
                        std::uint64_t seed, std::vector<EventRecord>* ledger) {
  return place_events(specs, grid, valid, seed, "event-extreme", "extreme", ledger);
}

CouplingMatrix build_coupling(int vars, int coupled_count, int lead_max, int lag_max, Rng& rng,
                              const std::vector<int>& deltas) {
  if (coupled_count < 0 || coupled_count > vars)
    throw StbError("coupled_count must be in [0, V], got " + std::to_string(coupled_count));
  if (lead_max < 0 || lag_max < 0) throw StbError("lead_max and lag_max must be >= 0");
  if (!deltas.empty() && static_cast<int>(deltas.size()) != vars)
    throw StbError("delta list length does not match V");

  std::vector<int> preferred, others;
  for (int v = 0; v < vars; ++v) (!deltas.empty() && deltas[v] != 0 ? preferred : others).push_back(v);
  std::shuffle(preferred.begin(), preferred.end(), rng);
  std::shuffle(others.begin(), others.end(), rng);
  preferred.insert(preferred.end(), others.begin(), others.end());

  CouplingMatrix m(static_cast<std::size_t>(vars));
  for (int i = 0; i < coupled_count; ++i) {
    auto& e = m[static_cast<std::size_t>(preferred[static_cast<std::size_t>(i)])];
    const int configured = deltas.empty() ? 0 : deltas[static_cast<std::size_t>(preferred[static_cast<std::size_t>(i)])];
    e.coupled = true;
    e.delta = configured != 0 ? (configured > 0 ? 1 : -1) : (rng.bernoulli(0.5) ? 1 : -1);
    e.lead = lead_max > 0 ? static_cast<int>(rng.uniform_int(1, lead_max)) : 0;
    e.lag = static_cast<int>(rng.uniform_int(0, lag_max));
  }
  return m;
}

MaskCube derive_driver_mask(const MaskCube& extremes, const CouplingMatrix& coupling) {
  const auto& e = extremes.dims();
  if (e.vars != 1) throw StbError("extreme mask must have a single plane");
  const Dims d{static_cast<Index>(coupling.size()), e.time, e.lat, e.lon};
  MaskCube out(d);
  parallel_for(d.vars * d.time, [&](std::ptrdiff_t job) {
    const Index v = job / d.time;
    const Index t = job % d.time;
    const auto& c = coupling[static_cast<std::size_t>(v)];
    if (!c.coupled) return;
    // Driver at t if an extreme occurs at tau with t in [tau - lead, tau + lag].
    auto dst = out.slice(v, t);
    for (Index tau = std::max<Index>(0, t - c.lag); tau <= std::min<Index>(e.time - 1, t + c.lead); ++tau)
      dst = dst.max(extremes.slice(0, tau));
  });
  return out;
}

MaskCube place_random_anomalies(const std::vector<std::vector<EventSpec>>& specs, const Dims& dims,
                                const PixelMask& valid, std::uint64_t seed,
                                const std::vector<std::string>& names, std::vector<EventRecord>* ledger) {
  if (static_cast<Index>(specs.size()) != dims.vars) throw StbError("one event list per variable required");
  MaskCube out(dims);
  for (Index v = 0; v < dims.vars; ++v) {
    const std::string name = v < static_cast<Index>(names.size()) ? names[static_cast<std::size_t>(v)]
                                                                 : std::to_string(v);
    auto m = place_events(specs[static_cast<std::size_t>(v)], dims, valid, stream_key(seed, "event-random", static_cast<std::uint64_t>(v)),
                          "event-random", "random:" + name, ledger);
    out.variable(v) = m.array();
  }
  return out;
}

nlohmann::json to_json(const EventSpec& spec) {
  nlohmann::json j{{"kind", to_string(spec.kind)}, {"n", spec.n}};
  switch (spec.kind) {
    case EventKind::Cube:
    case EventKind::Gaussian: j["sx"] = spec.sx; j["sy"] = spec.sy; j["sz"] = spec.sz; break;
    case EventKind::Local: j["sz"] = spec.sz; break;
    case EventKind::Onset: j["sx"] = spec.sx; j["sy"] = spec.sy; j["os"] = spec.os; break;
    case EventKind::RandomWalk: j["s"] = spec.s; break;
  }
  return j;
}

EventSpec event_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("kind")) throw StbError("event needs a 'kind'");
  for (const auto& [k, _] : j.items())
    if (k != "kind" && k != "n" && k != "sx" && k != "sy" && k != "sz" && k != "s" && k != "os")
      throw StbError("unknown event key '" + k + "'");
  EventSpec s;
  try {
    s.kind = parse_event_kind(j.at("kind").get<std::string>());
    s.n = j.value("n", 0);
    s.sx = j.value("sx", 1);
    s.sy = j.value("sy", 1);
    s.sz = j.value("sz", 1);
    s.s = j.value("s", 0);
    s.os = j.value("os", 0.0);
  } catch (const nlohmann::json::exception&) {
    throw StbError("event field has the wrong type");
  }
  validate(s);
  return s;
}

nlohmann::json to_json(const EventRecord& rec) {
  return {{"target", rec.target}, {"kind", to_string(rec.kind)}, {"spec", rec.spec_index},
          {"instance", rec.instance}, {"stream", rec.stream}, {"voxels", rec.voxels},
          {"bbox", rec.bbox}, {"params", to_json(rec.spec)}};
}

nlohmann::json to_json(const CouplingMatrix& m, const std::vector<std::string>& names) {
  nlohmann::json out = nlohmann::json::array();
  for (std::size_t v = 0; v < m.size(); ++v)
    out.push_back({{"variable", v < names.size() ? names[v] : std::to_string(v)},
                   {"coupled", m[v].coupled},
                   {"delta", m[v].delta},
                   {"lead", m[v].lead},
                   {"lag", m[v].lag}});
  return out;
}

std::string to_string(EventKind k) {
  switch (k) {
    case EventKind::Cube: return "CubeEvent";
    case EventKind::Local: return "LocalEvent";
    case EventKind::Gaussian: return "GaussianEvent";
    case EventKind::Onset: return "OnsetEvent";
    case EventKind::RandomWalk: return "RandomWalkEvent";
  }
  return "?";
}

EventKind parse_event_kind(const std::string& s) {
  if (s == "CubeEvent" || s == "Cube") return EventKind::Cube;
  if (s == "LocalEvent" || s == "Local") return EventKind::Local;
  if (s == "GaussianEvent" || s == "Gaussian") return EventKind::Gaussian;
  if (s == "OnsetEvent" || s == "Onset") return EventKind::Onset;
  if (s == "RandomWalkEvent" || s == "RandomWalk") return EventKind::RandomWalk;
  throw StbError("unknown event kind '" + s + "'");
}

}  // namespace stb
