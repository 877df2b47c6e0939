#pragma once

#include "stbench/iforest.hpp"
#include "stbench/types.hpp"

#include <span>
#include <vector>

namespace stb {

/// Every variable flagged wherever an extreme occurs.
MaskCube naive_baseline(const MaskCube& extremes, Index vars);

/// 1 where |value| > threshold[v] at valid pixels. `values` are deseasonalized.
MaskCube zscore_detector(const FloatCube& values, const PixelMask& valid, std::span<const double> thresholds);

/// Midpoint of the two population medians. Throws StbError when either
/// population is empty.
double threshold_from_medians(std::span<const double> extreme_scores, std::span<const double> normal_scores);

/// Median of a copy of `values` (mean of the middle pair for even sizes).
double median(std::vector<double> values);

/// Per-variable z-score thresholds from |value| over steps [t_begin, t_end),
/// split into extreme-flagged and normal voxels.
std::vector<double> zscore_thresholds(const FloatCube& values, const MaskCube& extremes, const PixelMask& valid,
                                      Index t_begin, Index t_end);

struct IsolationDetectorOptions {
  IsolationForest::Options forest;
  Index max_points = 400000;
};

struct IsolationDetector {
  std::vector<IsolationForest> forests;  // one per variable
  std::vector<double> thresholds;
  double anomaly_ratio = 0.0;
};

/// Feature row for variable v at one voxel: its value followed by its
/// signed differences to every other variable.
void iforest_features(const FloatCube& values, Index v, Index t, Index p, double* out);

/// Fits one forest per variable on normal (non-extreme) valid voxels of
/// [t_begin, t_end); thresholds are the (1 - r) quantile of the training
/// scores with r the extreme ratio of that range.
IsolationDetector fit_isolation_detector(const FloatCube& values, const MaskCube& extremes, const PixelMask& valid,
                                         Index t_begin, Index t_end, const IsolationDetectorOptions& options);

MaskCube isolation_predict(const IsolationDetector& det, const FloatCube& values, const PixelMask& valid,
                           Index t_begin, Index t_end);

}  // namespace stb
