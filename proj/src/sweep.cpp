#include "stbench/sweep.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace stb {

Experiment prepare_experiment(const DataCube& cube, const MaskSet& masks, const std::string& split) {
  Experiment ex;
  ex.cube = &cube;
  ex.masks = &masks;
  ex.split = split;
  const auto [ty0, ty1] = split_years(cube, "train");
  const auto [ey0, ey1] = split_years(cube, split);
  const Index wpy = cube.weeks_per_year;
  ex.train_begin = ty0 * wpy;
  ex.train_end = ty1 * wpy;
  ex.eval_begin = ey0 * wpy;
  ex.eval_end = ey1 * wpy;
  if (ex.eval_end > cube.dims().time || ex.train_end > cube.dims().time)
    throw StbError("split years exceed the series length");
  ex.deseason = deseasonalize(cube, compute_climatology(cube, ty0, ty1));
  return ex;
}

MaskCube eval_truth(const Experiment& ex) { return slice_time(ex.masks->drivers, ex.eval_begin, ex.eval_end); }

MaskCube run_detector(const std::string& name, const Experiment& ex, const DetectorSettings& settings) {
  const FloatCube& values = ex.deseason.values;
  const PixelMask& valid = ex.cube->valid;
  const Index V = values.dims().vars;
  if (name == "naive") return naive_baseline(slice_time(ex.masks->extremes, ex.eval_begin, ex.eval_end), V);
  if (name == "oracle") return eval_truth(ex);
  if (name == "zscore") {
    const auto thr = zscore_thresholds(values, ex.masks->extremes, valid, ex.train_begin, ex.train_end);
    return zscore_detector(slice_time(values, ex.eval_begin, ex.eval_end), valid, thr);
  }
  if (name == "iforest") {
    auto opts = settings.iforest;
    opts.forest.seed = stream_key(settings.seed, "iforest");
    const auto det = fit_isolation_detector(values, ex.masks->extremes, valid, ex.train_begin, ex.train_end, opts);
    return isolation_predict(det, values, valid, ex.eval_begin, ex.eval_end);
  }
  if (name == "micro") {
    MicroModel model = init_model(V, settings.model);
    TrainData data{&values, &ex.masks->extremes, &valid, ex.train_begin, ex.train_end};
    train(model, data);
    return infer_drivers(model, values, valid, ex.eval_begin, ex.eval_end).drivers;
  }
  throw StbError("unknown detector '" + name + "'");
}

MetricsReport evaluate_detector(const std::string& name, const Experiment& ex, const DetectorSettings& settings) {
  return evaluate_drivers(run_detector(name, ex, settings), eval_truth(ex), ex.cube->valid, ex.split);
}

std::vector<SweepRow> correlation_sweep(const GenConfig& base, const SweepOptions& options) {
  std::vector<SweepRow> rows;
  for (int count : options.counts) {
    GenConfig cfg = base;
    cfg.coupled_count = count;
    cfg.seed = base.seed + static_cast<std::uint64_t>(count);
    std::optional<Dataset> data;
    std::optional<Experiment> ex;
    std::string setup_error;
    try {
      data = synthesize_dataset(cfg);
      ex = prepare_experiment(data->cube, data->masks, options.split);
    } catch (const std::exception& e) {
      setup_error = e.what();
    }
    for (const auto& det : options.detectors) {
      SweepRow row{options.split, det, count, {}, setup_error};
      if (setup_error.empty()) {
        try {
          row.metrics = evaluate_detector(det, *ex, options.settings);
        } catch (const std::exception& e) {
          row.error = e.what();
        }
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string metrics_csv_header() { return "split,detector,coupled_count,tp,fp,fn,tn,f1,iou,oa"; }

std::string metrics_csv_row(const SweepRow& row) {
  std::ostringstream out;
  out << row.split << ',' << row.detector << ',' << row.coupled_count << ',';
  if (!row.error.empty()) {
    out << "-1,-1,-1,-1,nan,nan,nan";
    return out.str();
  }
  const auto& c = row.metrics.counts;
  const auto& s = row.metrics.score;
  out << c.tp << ',' << c.fp << ',' << c.fn << ',' << c.tn << ',';
  out.precision(6);
  out << std::fixed << s.f1 << ',' << s.iou << ',' << s.oa;
  return out.str();
}

void append_metrics_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::app);
  if (!out) throw StbError("cannot write " + path.string());
  if (fresh) out << metrics_csv_header() << '\n';
  for (const auto& r : rows) out << metrics_csv_row(r) << '\n';
}

namespace {

std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw StbError("spearman: need two equal-length series");
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n, mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0 || sbb == 0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace stb
