#pragma once

#include "stbench/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace stb {

struct Confusion {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;

  std::int64_t total() const { return tp + fp + fn + tn; }
  Confusion& operator+=(const Confusion& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
};

/// Scores in percent. An empty prediction of an empty target scores 100.
struct Scores {
  double f1 = 0.0;
  double iou = 0.0;
  double oa = 0.0;
};

Scores scores(const Confusion& c);

struct MetricsReport {
  std::string split;
  Confusion counts;
  Scores score;
  std::vector<Confusion> per_variable;
};

MetricsReport make_report(std::vector<Confusion> per_variable, std::string split = {});

/// Micro-averaged driver metrics over valid voxels. `pred` and `gt` share
/// shape (V, T, Lat, Lon).
MetricsReport evaluate_drivers(const MaskCube& pred, const MaskCube& gt, const PixelMask& valid,
                               std::string split = {});

/// Probabilities binarized with a strict `> threshold`.
MetricsReport evaluate_extremes(const FloatCube& prob, const MaskCube& gt, const PixelMask& valid,
                                double threshold = 0.5, std::string split = {});

}  // namespace stb
