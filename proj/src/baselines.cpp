#include "stbench/baselines.hpp"

#include "stbench/parallel.hpp"
#include "stbench/rng.hpp"

#include <algorithm>
#include <cmath>

namespace stb {

MaskCube naive_baseline(const MaskCube& extremes, Index vars) {
  const Dims d = extremes.dims();
  MaskCube out({vars, d.time, d.lat, d.lon});
  for (Index v = 0; v < vars; ++v) out.variable(v) = extremes.variable(0);
  return out;
}

MaskCube zscore_detector(const FloatCube& values, const PixelMask& valid, std::span<const double> thresholds) {
  const Dims d = values.dims();
  if (static_cast<Index>(thresholds.size()) != d.vars) throw StbError("zscore: one threshold per variable required");
  MaskCube out(d);
  parallel_for(d.vars * d.time, [&](std::ptrdiff_t job) {
    const Index v = job / d.time, t = job % d.time;
    const double thr = thresholds[static_cast<std::size_t>(v)];
    auto o = out.slice(v, t);
    const auto x = values.slice(v, t);
    for (Index p = 0; p < d.pixels(); ++p) o[p] = valid[p] && std::abs(static_cast<double>(x[p])) > thr;
  });
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) throw StbError("median of an empty set");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double threshold_from_medians(std::span<const double> extreme_scores, std::span<const double> normal_scores) {
  if (extreme_scores.empty() || normal_scores.empty())
    throw StbError("threshold_from_medians: empty " + std::string(extreme_scores.empty() ? "extreme" : "normal") +
                   " population; fall back to a quantile threshold");
  return 0.5 * (median({extreme_scores.begin(), extreme_scores.end()}) +
                median({normal_scores.begin(), normal_scores.end()}));
}

std::vector<double> zscore_thresholds(const FloatCube& values, const MaskCube& extremes, const PixelMask& valid,
                                      Index t_begin, Index t_end) {
  const Dims d = values.dims();
  std::vector<double> out(static_cast<std::size_t>(d.vars));
  parallel_for(d.vars, [&](std::ptrdiff_t v) {
    std::vector<double> ex, normal;
    for (Index t = t_begin; t < t_end; ++t) {
      const auto x = values.slice(v, t);
      const auto e = extremes.slice(0, t);
      for (Index p = 0; p < d.pixels(); ++p) {
        if (!valid[p]) continue;
        (e[p] ? ex : normal).push_back(std::abs(static_cast<double>(x[p])));
      }
    }
    out[static_cast<std::size_t>(v)] = threshold_from_medians(ex, normal);
  });
  return out;
}

void iforest_features(const FloatCube& values, Index v, Index t, Index p, double* out) {
  const Dims d = values.dims();
  const double x = values.slice(v, t)[p];
  out[0] = x;
  Index k = 1;
  for (Index u = 0; u < d.vars; ++u)
    if (u != v) out[k++] = x - static_cast<double>(values.slice(u, t)[p]);
}

IsolationDetector fit_isolation_detector(const FloatCube& values, const MaskCube& extremes, const PixelMask& valid,
                                         Index t_begin, Index t_end, const IsolationDetectorOptions& options) {
  const Dims d = values.dims();
  std::vector<std::pair<Index, Index>> normal;  // (t, p)
  std::int64_t extreme_count = 0, valid_count = 0;
  for (Index t = t_begin; t < t_end; ++t) {
    const auto e = extremes.slice(0, t);
    for (Index p = 0; p < d.pixels(); ++p) {
      if (!valid[p]) continue;
      ++valid_count;
      if (e[p]) ++extreme_count;
      else normal.emplace_back(t, p);
    }
  }
  if (normal.empty()) throw StbError("isolation forest: no normal training voxels");
  Rng rng(options.forest.seed, "iforest-sample");
  if (static_cast<Index>(normal.size()) > options.max_points) {
    for (Index i = 0; i < options.max_points; ++i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(i, static_cast<std::int64_t>(normal.size()) - 1));
      std::swap(normal[static_cast<std::size_t>(i)], normal[j]);
    }
    normal.resize(static_cast<std::size_t>(options.max_points));
  }

  IsolationDetector det;
  det.anomaly_ratio = static_cast<double>(extreme_count) / static_cast<double>(valid_count);
  for (Index v = 0; v < d.vars; ++v) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> x(static_cast<Index>(normal.size()), d.vars);
    for (std::size_t i = 0; i < normal.size(); ++i)
      iforest_features(values, v, normal[i].first, normal[i].second, x.row(static_cast<Index>(i)).data());
    IsolationForest forest;
    auto opts = options.forest;
    opts.seed = stream_key(options.forest.seed, "iforest-variable", static_cast<std::uint64_t>(v));
    forest.fit(x, opts);
    Eigen::VectorXd s = forest.score_rows(x);
    std::vector<double> sorted(s.data(), s.data() + s.size());
    std::sort(sorted.begin(), sorted.end());
    const double q = 1.0 - det.anomaly_ratio;
    const auto idx = static_cast<std::size_t>(std::clamp(std::ceil(q * static_cast<double>(sorted.size())) - 1.0, 0.0,
                                                         static_cast<double>(sorted.size() - 1)));
    det.thresholds.push_back(sorted[idx]);
    det.forests.push_back(std::move(forest));
  }
  return det;
}

MaskCube isolation_predict(const IsolationDetector& det, const FloatCube& values, const PixelMask& valid,
                           Index t_begin, Index t_end) {
  const Dims d = values.dims();
  MaskCube out({d.vars, t_end - t_begin, d.lat, d.lon});
  parallel_for(d.vars * (t_end - t_begin), [&](std::ptrdiff_t job) {
    const Index v = job / (t_end - t_begin), t = t_begin + job % (t_end - t_begin);
    std::vector<double> row(static_cast<std::size_t>(d.vars));
    auto o = out.slice(v, t - t_begin);
    for (Index p = 0; p < d.pixels(); ++p) {
      if (!valid[p]) continue;
      iforest_features(values, v, t, p, row.data());
      o[p] = det.forests[static_cast<std::size_t>(v)].score(row.data()) > det.thresholds[static_cast<std::size_t>(v)];
    }
  });
  return out;
}

}  // namespace stb
