#pragma once

#include "stbench/baselines.hpp"
#include "stbench/cube.hpp"
#include "stbench/metrics.hpp"
#include "stbench/model.hpp"
#include "stbench/synth.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace stb {

/// A dataset prepared for detectors: deseasonalized with training-year
/// climatology, with step ranges for training and for the evaluated split.
struct Experiment {
  const DataCube* cube = nullptr;
  const MaskSet* masks = nullptr;
  DataCube deseason;
  std::string split;
  Index train_begin = 0;
  Index train_end = 0;
  Index eval_begin = 0;
  Index eval_end = 0;
};

Experiment prepare_experiment(const DataCube& cube, const MaskSet& masks, const std::string& split);

struct DetectorSettings {
  IsolationDetectorOptions iforest;
  ModelHyper model;
  std::uint64_t seed = 0;
};

/// Known names: naive, zscore, iforest, micro and oracle (reads the ground
/// truth; for tests). Predictions cover [eval_begin, eval_end).
MaskCube run_detector(const std::string& name, const Experiment& ex, const DetectorSettings& settings);

/// Ground-truth drivers restricted to the evaluated steps.
MaskCube eval_truth(const Experiment& ex);

MetricsReport evaluate_detector(const std::string& name, const Experiment& ex, const DetectorSettings& settings);

struct SweepOptions {
  std::vector<int> counts;
  std::vector<std::string> detectors;
  std::string split = "val";
  DetectorSettings settings;
};

struct SweepRow {
  std::string split;
  std::string detector;
  int coupled_count = 0;
  MetricsReport metrics;
  std::string error;  // non-empty marks a failed cell
};

/// One regenerated dataset per coupled count (seed = base seed + count).
std::vector<SweepRow> correlation_sweep(const GenConfig& base, const SweepOptions& options);

std::string metrics_csv_header();
std::string metrics_csv_row(const SweepRow& row);
/// Appends rows, writing the header first when the file is new or empty.
void append_metrics_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows);

double spearman(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace stb
