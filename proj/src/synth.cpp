#include "stbench/synth.hpp"

#include "stbench/parallel.hpp"

#include <cmath>

namespace stb {

double synthesize_point(double b, double n, int e_a, int e_r, int e_ex, double kb, double kn, double ks,
                        double sigma_n, int delta) {
  const int anomalous = (e_r | e_a) & 1;
  const int shifted = (e_r | e_ex) & 1;
  const double theta = b * (std::exp2(kb * anomalous) - 1.0) + n * std::exp2(kn * anomalous) + ks * shifted * sigma_n;
  // Theta == 0 falls on the "-1" branch; Lambda * Theta is 0 either way.
  const double sign = theta <= 0.0 ? -1.0 : 1.0;
  const double lambda = e_a ? sign / static_cast<double>(delta) : 1.0;
  return b + lambda * theta;
}

PixelMask build_valid_mask(const GenConfig& config) {
  PixelMask valid = PixelMask::Ones(config.lat * config.lon);
  for (const auto& box : config.invalid_boxes)
    for (int y = box[0]; y < box[1]; ++y)
      for (int x = box[2]; x < box[3]; ++x) valid[y * config.lon + x] = 0;
  return valid;
}

nlohmann::json split_attrs(const GenConfig& c) {
  return {{"train", {0, c.years_train}},
          {"val", {c.years_train, c.years_train + c.years_val}},
          {"test", {c.years_train + c.years_val, c.years}}};
}

MaskPlan synthesize_masks(const GenConfig& config) {
  validate(config);
  const Dims d = config.dims();
  const auto names = config.names();

  MaskPlan plan;
  plan.valid = build_valid_mask(config);
  plan.masks.extremes = place_extremes(config.extremes, d, plan.valid, config.seed, &plan.ledger);

  std::vector<int> deltas;
  for (const auto& v : config.variables) deltas.push_back(v.delta);
  Rng coupling_rng(config.seed, "coupling");
  plan.coupling = build_coupling(static_cast<int>(d.vars), config.coupled_count, config.lead_max, config.lag_max,
                                 coupling_rng, deltas);
  plan.masks.drivers = derive_driver_mask(plan.masks.extremes, plan.coupling);

  std::vector<std::vector<EventSpec>> random_specs;
  for (const auto& v : config.variables) random_specs.push_back(v.events);
  plan.masks.random_anoms = place_random_anomalies(random_specs, d, plan.valid, config.seed, names, &plan.ledger);

  // Dependents inherit every independent variable's random anomalies.
  std::vector<Index> independents;
  for (Index v = 0; v < d.vars; ++v)
    if (config.variables[static_cast<std::size_t>(v)].base) independents.push_back(v);
  for (Index v = 0; v < d.vars; ++v) {
    if (!config.variables[static_cast<std::size_t>(v)].dependency) continue;
    for (Index u : independents)
      plan.masks.random_anoms.variable(v) = plan.masks.random_anoms.variable(v).max(plan.masks.random_anoms.variable(u));
  }
  return plan;
}

namespace {

Field base_for(const GenConfig& config, const MaskPlan& plan, Index v) {
  const Dims d = config.dims();
  const auto& var = config.variables[static_cast<std::size_t>(v)];
  if (var.base) return gen_base(*var.base, d.time, d.lat, d.lon);

  std::vector<Field> bases;
  std::vector<MaskCube> disturb;
  for (Index u = 0; u < d.vars; ++u) {
    const auto& iu = config.variables[static_cast<std::size_t>(u)];
    if (!iu.base) continue;
    bases.push_back(gen_base(*iu.base, d.time, d.lat, d.lon));
    if (var.dependency->weights.disturbed) {
      MaskCube m({1, d.time, d.lat, d.lon});
      m.array() = plan.masks.random_anoms.variable(u).max(plan.masks.drivers.variable(u));
      disturb.push_back(std::move(m));
    }
  }
  Rng rng(config.seed, "weights", static_cast<std::uint64_t>(v));
  const auto w = sample_weights(var.dependency->weights, static_cast<Index>(bases.size()), rng);
  std::vector<const Field*> base_ptrs;
  for (const auto& b : bases) base_ptrs.push_back(&b);
  std::vector<const MaskCube*> disturb_ptrs;
  for (const auto& m : disturb) disturb_ptrs.push_back(&m);
  return couple_dependent(base_ptrs, w, var.dependency->kind, disturb_ptrs);
}

}  // namespace

Dataset synthesize_dataset(const GenConfig& config) {
  auto plan = synthesize_masks(config);
  const Dims d = config.dims();

  Dataset out;
  out.cube.values = FloatCube(d);
  out.cube.var_names = config.names();
  for (const auto& v : config.variables) out.cube.units.push_back(v.units);
  out.cube.valid = plan.valid;
  out.cube.weeks_per_year = config.weeks_per_year;

  for (Index v = 0; v < d.vars; ++v) {
    const auto& var = config.variables[static_cast<std::size_t>(v)];
    const auto& link = plan.coupling[static_cast<std::size_t>(v)];
    const Field base = base_for(config, plan, v);
    const Field noise = gen_noise(var.noise, d.time, d.lat, d.lon, stream_key(config.seed, "noise", static_cast<std::uint64_t>(v)));
    const int delta = link.coupled ? link.delta : 1;

    parallel_for(d.time, [&](std::ptrdiff_t t) {
      const Index base_off = base.offset(0, t, 0, 0);
      const Index off = out.cube.values.offset(v, t, 0, 0);
      const Index ex_off = plan.masks.extremes.offset(0, t, 0, 0);
      for (Index p = 0; p < d.pixels(); ++p) {
        out.cube.values.data()[off + p] = static_cast<float>(synthesize_point(
            base.data()[base_off + p], noise.data()[base_off + p], plan.masks.drivers.data()[off + p],
            plan.masks.random_anoms.data()[off + p], plan.masks.extremes.data()[ex_off + p], var.kb, var.kn, var.ks,
            var.noise.sigma, delta));
      }
    });
  }

  out.report = ratio_report(plan.masks, plan.valid);
  out.report.config_hash = config_hash(config);
  out.cube.attrs = {{"generator", "stbench"},
                    {"seed", static_cast<std::int64_t>(config.seed)},
                    {"config_hash", out.report.config_hash},
                    {"split", split_attrs(config)},
                    {"coupling", to_json(plan.coupling, out.cube.var_names)}};
  out.masks = std::move(plan.masks);
  out.coupling = std::move(plan.coupling);
  out.ledger = std::move(plan.ledger);
  return out;
}

SynthesisReport ratio_report(const MaskSet& masks, const PixelMask& valid) {
  const auto& d = masks.drivers.dims();
  const Index valid_pixels = static_cast<Index>(valid.cast<Index>().sum());
  if (valid_pixels == 0) throw StbError("ratio_report: valid mask is empty");

  SynthesisReport r;
  std::int64_t extreme = 0;
  for (Index t = 0; t < d.time; ++t)
    extreme += (masks.extremes.slice(0, t) * valid).cast<std::int64_t>().sum();
  std::int64_t drivers = 0, random = 0;
  for (Index v = 0; v < d.vars; ++v) {
    std::int64_t dv = 0, rv = 0;
    for (Index t = 0; t < d.time; ++t) {
      dv += (masks.drivers.slice(v, t) * valid).cast<std::int64_t>().sum();
      rv += (masks.random_anoms.slice(v, t) * valid).cast<std::int64_t>().sum();
    }
    r.driver_counts.push_back(dv);
    r.random_counts.push_back(rv);
    drivers += dv;
    random += rv;
  }
  const double per_plane = static_cast<double>(d.time) * static_cast<double>(valid_pixels);
  r.pct_extreme = 100.0 * static_cast<double>(extreme) / per_plane;
  r.pct_correlated = 100.0 * static_cast<double>(drivers) / (per_plane * static_cast<double>(d.vars));
  r.pct_random = 100.0 * static_cast<double>(random) / (per_plane * static_cast<double>(d.vars));
  return r;
}

nlohmann::json to_json(const SynthesisReport& r, const std::vector<std::string>& names) {
  nlohmann::json per_var = nlohmann::json::array();
  for (std::size_t v = 0; v < r.driver_counts.size(); ++v)
    per_var.push_back({{"variable", v < names.size() ? names[v] : std::to_string(v)},
                       {"driver_voxels", r.driver_counts[v]},
                       {"random_voxels", r.random_counts[v]}});
  return {{"pct_extreme", r.pct_extreme},
          {"pct_correlated", r.pct_correlated},
          {"pct_random", r.pct_random},
          {"variables", per_var},
          {"config_hash", r.config_hash}};
}

}  // namespace stb
