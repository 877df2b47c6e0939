#include "stbench/metrics.hpp"

#include "stbench/parallel.hpp"

namespace stb {

Scores scores(const Confusion& c) {
  Scores s;
  const std::int64_t union_ = c.tp + c.fp + c.fn;
  if (union_ == 0) {
    s.f1 = s.iou = 100.0;
  } else {
    s.f1 = 100.0 * 2.0 * static_cast<double>(c.tp) / static_cast<double>(2 * c.tp + c.fp + c.fn);
    s.iou = 100.0 * static_cast<double>(c.tp) / static_cast<double>(union_);
  }
  if (c.total() > 0) s.oa = 100.0 * static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  return s;
}

MetricsReport make_report(std::vector<Confusion> per_variable, std::string split) {
  MetricsReport r;
  r.split = std::move(split);
  for (const auto& c : per_variable) r.counts += c;
  r.per_variable = std::move(per_variable);
  r.score = scores(r.counts);
  return r;
}

namespace {

template <typename Pred>
MetricsReport count(const Dims& d, const MaskCube& gt, const PixelMask& valid, Pred&& predicted, std::string split) {
  if (gt.dims() != d) throw StbError("metrics: prediction shape " + to_string(d) + " does not match " + to_string(gt.dims()));
  if (valid.size() != d.pixels()) throw StbError("metrics: valid mask does not match the grid");
  if ((valid != 0).count() == 0) throw StbError("metrics: valid set is empty");
  std::vector<Confusion> per_slice(static_cast<std::size_t>(d.vars * d.time));
  parallel_for(d.vars * d.time, [&](std::ptrdiff_t job) {
    const Index v = job / d.time, t = job % d.time;
    Confusion c;
    const auto g = gt.slice(v, t);
    for (Index p = 0; p < d.pixels(); ++p) {
      if (!valid[p]) continue;
      const bool pr = predicted(v, t, p), gv = g[p] != 0;
      c.tp += pr && gv;
      c.fp += pr && !gv;
      c.fn += !pr && gv;
      c.tn += !pr && !gv;
    }
    per_slice[static_cast<std::size_t>(job)] = c;
  });
  std::vector<Confusion> per_var(static_cast<std::size_t>(d.vars));
  for (Index v = 0; v < d.vars; ++v)
    for (Index t = 0; t < d.time; ++t) per_var[static_cast<std::size_t>(v)] += per_slice[static_cast<std::size_t>(v * d.time + t)];
  return make_report(std::move(per_var), std::move(split));
}

}  // namespace

MetricsReport evaluate_drivers(const MaskCube& pred, const MaskCube& gt, const PixelMask& valid, std::string split) {
  return count(
      pred.dims(), gt, valid, [&](Index v, Index t, Index p) { return pred.slice(v, t)[p] != 0; }, std::move(split));
}

MetricsReport evaluate_extremes(const FloatCube& prob, const MaskCube& gt, const PixelMask& valid, double threshold,
                                std::string split) {
  return count(
      prob.dims(), gt, valid, [&](Index v, Index t, Index p) { return prob.slice(v, t)[p] > threshold; },
      std::move(split));
}

}  // namespace stb
