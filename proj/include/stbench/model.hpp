#pragma once

// Desk-scale driver detector: per-variable feature extractor, binary LFQ
// bottleneck and V+1 extreme heads, trained with hand-written gradients.

#include "stbench/cube.hpp"
#include "stbench/lfq.hpp"

#include <Eigen/Core>

#include <chrono>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace stb {

struct ModelHyper {
  int features = 8;     // K
  int window = 6;       // T
  int head_hidden = 4;  // J
  int tile = 32;
  int batch = 4;
  int steps = 2000;
  double lr = 2e-3;
  double warmup_frac = 0.05;
  lfq::LossWeights lambdas;
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const ModelHyper& h);
ModelHyper hyper_from_json(const nlohmann::json& j);

/// Steps of input history consumed by the causal temporal convolution.
inline constexpr Index kHalo = 2;

struct ParamBlock {
  std::string name;
  Index offset = 0;
  Index rows = 0;
  Index cols = 0;
  Index size() const { return rows * cols; }
};

enum VarBlock : int { kTemporalW, kTemporalB, kSpatialW, kSpatialB, kProj1W, kProj1B, kProj2W, kProj2B, kVarBlocks };
enum HeadBlock : int { kMixW, kMixB, kOutW, kOutB, kHeadBlocks };

class MicroModel {
 public:
  MicroModel() = default;
  MicroModel(Index vars, const ModelHyper& hyper);

  Index vars() const { return vars_; }
  Index heads() const { return vars_ + 1; }
  const ModelHyper& hyper() const { return hyper_; }
  ModelHyper& hyper() { return hyper_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }

  const ParamBlock& var_block(Index v, VarBlock b) const { return blocks_[v * kVarBlocks + b]; }
  const ParamBlock& code_scale() const { return blocks_[vars_ * kVarBlocks]; }
  const ParamBlock& code_offset() const { return blocks_[vars_ * kVarBlocks + 1]; }
  const ParamBlock& head_block(Index h, HeadBlock b) const {
    return blocks_[vars_ * kVarBlocks + 2 + h * kHeadBlocks + b];
  }

  Eigen::Map<const Eigen::MatrixXd> map(const ParamBlock& b) const {
    return {params.data() + b.offset, b.rows, b.cols};
  }
  Eigen::Map<Eigen::MatrixXd> map(const ParamBlock& b) { return {params.data() + b.offset, b.rows, b.cols}; }

  lfq::AffineCode<double> code() const;

  Eigen::VectorXd params;

 private:
  Index vars_ = 0;
  ModelHyper hyper_;
  std::vector<ParamBlock> blocks_;
};

/// Xavier-uniform weights, zero biases; the final projection to z_l starts
/// at zero so every code is initially normal.
MicroModel init_model(Index vars, const ModelHyper& hyper);

/// One training or inference sample. Inputs carry kHalo history steps in
/// front of the T window steps (zeros before the series start).
struct Window {
  Index height = 0;
  Index width = 0;
  Index steps = 0;                     // T
  std::vector<Eigen::ArrayXd> inputs;  // per variable, (T + kHalo) * H * W
  Eigen::ArrayXd valid;                // H * W
  Eigen::ArrayXd target;               // extremes at the last step
  Eigen::ArrayXd footprint;            // union of extremes over the T steps

  Index pixels() const { return height * width; }
};

/// Window whose last step is t0, tile origin (y0, x0). `values` are
/// deseasonalized; `extremes` may be empty for pure inference.
Window make_window(const FloatCube& values, const MaskCube* extremes, const PixelMask& valid, Index t0, Index y0,
                   Index x0, Index height, Index width, Index steps);

struct ForwardResult {
  std::vector<Eigen::ArrayXd> z_l;   // per variable, T * H * W
  std::vector<lfq::Bits> q;          // per variable, T * H * W
  std::vector<Eigen::ArrayXd> prob;  // V + 1 heads, H * W
};

ForwardResult forward(const MicroModel& model, const Window& window);

/// Frozen stop-gradient quantities for a finite-difference surrogate: signs
/// and the normal code from a reference evaluation. Under an anchor the
/// codes are affine(sign_ref + z_l - z_l_ref), so the loss is smooth in
/// every parameter and its derivative equals the straight-through gradient.
struct Anchor {
  std::vector<std::vector<Eigen::ArrayXd>> z_l;  // [window][variable]
  Eigen::VectorXd code0;
};

Anchor make_anchor(const MicroModel& model, const std::vector<Window>& batch);

struct BatchResult {
  lfq::LossBreakdown loss;
  Eigen::VectorXd grad;  // empty unless requested
};

BatchResult batch_loss(const MicroModel& model, const std::vector<Window>& batch, bool with_grad,
                       const Anchor* anchor = nullptr);

struct TrainReport {
  std::vector<lfq::LossBreakdown> history;
  double seconds = 0.0;
  double val_driver_f1 = -1.0;  // filled by callers that hold ground truth
  double val_extreme_f1 = -1.0;
};

nlohmann::json to_json(const TrainReport& r);

struct TrainData {
  const FloatCube* values = nullptr;  // deseasonalized
  const MaskCube* extremes = nullptr;
  const PixelMask* valid = nullptr;
  Index t_begin = 0;  // last-step range for sampled windows
  Index t_end = 0;
};

using StepCallback = std::function<void(int step, const lfq::LossBreakdown&)>;

/// Adam with linear warmup. Throws StbError naming the step on a NaN loss.
TrainReport train(MicroModel& model, const TrainData& data, const StepCallback& on_step = {});

struct Inference {
  Index t_begin = 0;
  MaskCube drivers;       // (V, n, Lat, Lon)
  FloatCube extreme_prob;  // (1, n, Lat, Lon), multivariate head
};

/// q for every variable and step in [t_begin, t_end) over the full frame.
MaskCube infer_codes(const MicroModel& model, const FloatCube& values, const PixelMask& valid, Index t_begin,
                     Index t_end);

Inference infer_drivers(const MicroModel& model, const FloatCube& values, const PixelMask& valid, Index t_begin,
                        Index t_end);

void save_checkpoint(const MicroModel& model, const std::filesystem::path& path,
                     const nlohmann::json& extra = nlohmann::json::object());
MicroModel load_checkpoint(const std::filesystem::path& path);

std::string parameter_hash(const MicroModel& model);

}  // namespace stb
