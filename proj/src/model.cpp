#include "stbench/model.hpp"

#include "stbench/container.hpp"
#include "stbench/parallel.hpp"
#include "stbench/rng.hpp"
#include "stbench/synth.hpp"

#include <cmath>
#include <numeric>

namespace stb {

using Eigen::ArrayXd;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

nlohmann::json to_json(const ModelHyper& h) {
  return {{"features", h.features},
          {"window", h.window},
          {"head_hidden", h.head_hidden},
          {"tile", h.tile},
          {"batch", h.batch},
          {"steps", h.steps},
          {"lr", h.lr},
          {"warmup_frac", h.warmup_frac},
          {"lambda_commit", h.lambdas.commit},
          {"lambda_ent", h.lambdas.ent},
          {"lambda_div", h.lambdas.div},
          {"lambda_driver", h.lambdas.driver},
          {"seed", h.seed}};
}

ModelHyper hyper_from_json(const nlohmann::json& j) {
  ModelHyper h;
  h.features = j.value("features", h.features);
  h.window = j.value("window", h.window);
  h.head_hidden = j.value("head_hidden", h.head_hidden);
  h.tile = j.value("tile", h.tile);
  h.batch = j.value("batch", h.batch);
  h.steps = j.value("steps", h.steps);
  h.lr = j.value("lr", h.lr);
  h.warmup_frac = j.value("warmup_frac", h.warmup_frac);
  h.lambdas.commit = j.value("lambda_commit", h.lambdas.commit);
  h.lambdas.ent = j.value("lambda_ent", h.lambdas.ent);
  h.lambdas.div = j.value("lambda_div", h.lambdas.div);
  h.lambdas.driver = j.value("lambda_driver", h.lambdas.driver);
  h.seed = j.value("seed", h.seed);
  return h;
}

MicroModel::MicroModel(Index vars, const ModelHyper& hyper) : vars_(vars), hyper_(hyper) {
  if (vars < 1) throw StbError("model needs at least one variable");
  if (hyper.window < 2) throw StbError("model window must be >= 2");
  if (hyper.features < 1 || hyper.head_hidden < 1) throw StbError("model widths must be positive");
  const Index K = hyper.features, T = hyper.window, J = hyper.head_hidden;
  Index offset = 0;
  auto add = [&](std::string name, Index rows, Index cols) {
    blocks_.push_back({std::move(name), offset, rows, cols});
    offset += rows * cols;
  };
  for (Index v = 0; v < vars; ++v) {
    const std::string p = "var" + std::to_string(v) + ".";
    add(p + "temporal.w", K, 3);
    add(p + "temporal.b", K, 1);
    add(p + "spatial.w", K, 9 * K);
    add(p + "spatial.b", K, 1);
    add(p + "proj1.w", K, K);
    add(p + "proj1.b", K, 1);
    add(p + "proj2.w", 1, K);
    add(p + "proj2.b", 1, 1);
  }
  add("code.scale", K, 1);
  add("code.offset", K, 1);
  for (Index h = 0; h <= vars; ++h) {
    const std::string p = (h < vars ? "head" + std::to_string(h) : std::string("head_all")) + ".";
    add(p + "mix.w", J, T * K);
    add(p + "mix.b", J, 1);
    add(p + "out.w", 1, 9 * J);
    add(p + "out.b", 1, 1);
  }
  params = VectorXd::Zero(offset);
}

lfq::AffineCode<double> MicroModel::code() const {
  return {map(code_scale()).col(0), map(code_offset()).col(0)};
}

MicroModel init_model(Index vars, const ModelHyper& hyper) {
  MicroModel m(vars, hyper);
  Rng rng(hyper.seed, "model-init");
  const Index K = hyper.features, J = hyper.head_hidden;
  auto xavier = [&](const ParamBlock& b, Index fan_in, Index fan_out) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    auto w = m.map(b);
    for (Index j = 0; j < w.cols(); ++j)
      for (Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-a, a);
  };
  for (Index v = 0; v < vars; ++v) {
    xavier(m.var_block(v, kTemporalW), 3, K);
    xavier(m.var_block(v, kSpatialW), 9 * K, K);
    xavier(m.var_block(v, kProj1W), K, K);
  }
  xavier(m.code_scale(), 1, K);
  for (Index h = 0; h <= vars; ++h) {
    xavier(m.head_block(h, kMixW), hyper.window * K, J);
    xavier(m.head_block(h, kOutW), 9 * J, 1);
  }
  return m;
}

namespace {

// Columns of a "steps x pixels" field are indexed s * P + y * W + x.

MatrixXd spatial_im2col(const MatrixXd& a, Index steps, Index H, Index W) {
  const Index C = a.rows(), P = H * W;
  MatrixXd col = MatrixXd::Zero(9 * C, steps * P);
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      const Index tap = (dy + 1) * 3 + (dx + 1);
      for (Index s = 0; s < steps; ++s)
        for (Index y = 0; y < H; ++y) {
          const Index ys = y + dy;
          if (ys < 0 || ys >= H) continue;
          for (Index x = 0; x < W; ++x) {
            const Index xs = x + dx;
            if (xs < 0 || xs >= W) continue;
            col.block(tap * C, s * P + y * W + x, C, 1) = a.col(s * P + ys * W + xs);
          }
        }
    }
  return col;
}

MatrixXd spatial_col2im(const MatrixXd& col, Index C, Index steps, Index H, Index W) {
  const Index P = H * W;
  MatrixXd a = MatrixXd::Zero(C, steps * P);
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      const Index tap = (dy + 1) * 3 + (dx + 1);
      for (Index s = 0; s < steps; ++s)
        for (Index y = 0; y < H; ++y) {
          const Index ys = y + dy;
          if (ys < 0 || ys >= H) continue;
          for (Index x = 0; x < W; ++x) {
            const Index xs = x + dx;
            if (xs < 0 || xs >= W) continue;
            a.col(s * P + ys * W + xs) += col.block(tap * C, s * P + y * W + x, C, 1);
          }
        }
    }
  return a;
}

struct VarCache {
  MatrixXd col1;  // 3 x N
  MatrixXd h1;    // K x N
  MatrixXd col2;  // 9K x N
  MatrixXd f;     // K x N
  MatrixXd p1;    // K x N
  ArrayXd z_l;    // N
};

VarCache extract(const MicroModel& m, Index v, const ArrayXd& input, Index steps, Index H, Index W) {
  const Index P = H * W, N = steps * P;
  VarCache c;
  c.col1.resize(3, N);
  for (Index j = 0; j < 3; ++j) c.col1.row(j) = input.segment(j * P, N).matrix().transpose();
  c.h1 = m.map(m.var_block(v, kTemporalW)) * c.col1;
  c.h1.colwise() += m.map(m.var_block(v, kTemporalB)).col(0);
  c.h1 = c.h1.array().tanh().matrix();
  c.col2 = spatial_im2col(c.h1, steps, H, W);
  c.f = m.map(m.var_block(v, kSpatialW)) * c.col2;
  c.f.colwise() += m.map(m.var_block(v, kSpatialB)).col(0);
  c.f = c.f.array().tanh().matrix();
  c.p1 = m.map(m.var_block(v, kProj1W)) * c.f;
  c.p1.colwise() += m.map(m.var_block(v, kProj1B)).col(0);
  c.p1 = c.p1.array().tanh().matrix();
  RowVectorXd z = m.map(m.var_block(v, kProj2W)) * c.p1;
  c.z_l = z.transpose().array() + m.map(m.var_block(v, kProj2B))(0, 0);
  return c;
}

/// Head input: rows t * K + k, one column per pixel.
MatrixXd head_rows(const MatrixXd& z_q, Index steps, Index P) {
  const Index K = z_q.rows();
  MatrixXd r(steps * K, P);
  for (Index t = 0; t < steps; ++t) r.middleRows(t * K, K) = z_q.middleCols(t * P, P);
  return r;
}

struct HeadCache {
  MatrixXd input;  // T*K x P
  MatrixXd h;      // J x P
  MatrixXd col;    // 9J x P
  ArrayXd prob;    // P
};

HeadCache run_head(const MicroModel& m, Index head, MatrixXd input, Index H, Index W) {
  HeadCache c;
  c.input = std::move(input);
  c.h = m.map(m.head_block(head, kMixW)) * c.input;
  c.h.colwise() += m.map(m.head_block(head, kMixB)).col(0);
  c.h = c.h.array().tanh().matrix();
  c.col = spatial_im2col(c.h, 1, H, W);
  RowVectorXd logit = m.map(m.head_block(head, kOutW)) * c.col;
  const double b = m.map(m.head_block(head, kOutB))(0, 0);
  c.prob = (-(logit.transpose().array() + b)).exp().unaryExpr([](double e) { return 1.0 / (1.0 + e); });
  return c;
}

/// Backward through one head; returns d loss / d input.
MatrixXd head_backward(const MicroModel& m, Index head, const HeadCache& c, const ArrayXd& dlogit, Index H, Index W,
                       VectorXd& grad) {
  auto g = [&](HeadBlock b) {
    const ParamBlock& pb = m.head_block(head, b);
    return Eigen::Map<MatrixXd>(grad.data() + pb.offset, pb.rows, pb.cols);
  };
  const RowVectorXd dl = dlogit.matrix().transpose();
  g(kOutW) += dl * c.col.transpose();
  g(kOutB)(0, 0) += dl.sum();
  const MatrixXd dcol = m.map(m.head_block(head, kOutW)).transpose() * dl;
  const MatrixXd dh = spatial_col2im(dcol, c.h.rows(), 1, H, W);
  const MatrixXd da = (dh.array() * (1.0 - c.h.array().square())).matrix();
  g(kMixW) += da * c.input.transpose();
  g(kMixB) += da.rowwise().sum();
  return m.map(m.head_block(head, kMixW)).transpose() * da;
}

void extract_backward(const MicroModel& m, Index v, const VarCache& c, const ArrayXd& dz_l, Index steps, Index H,
                      Index W, VectorXd& grad) {
  auto g = [&](VarBlock b) {
    const ParamBlock& pb = m.var_block(v, b);
    return Eigen::Map<MatrixXd>(grad.data() + pb.offset, pb.rows, pb.cols);
  };
  const RowVectorXd dz = dz_l.matrix().transpose();
  g(kProj2W) += dz * c.p1.transpose();
  g(kProj2B)(0, 0) += dz.sum();
  const MatrixXd dp1 = m.map(m.var_block(v, kProj2W)).transpose() * dz;
  const MatrixXd da1 = (dp1.array() * (1.0 - c.p1.array().square())).matrix();
  g(kProj1W) += da1 * c.f.transpose();
  g(kProj1B) += da1.rowwise().sum();
  const MatrixXd df = m.map(m.var_block(v, kProj1W)).transpose() * da1;
  const MatrixXd da2 = (df.array() * (1.0 - c.f.array().square())).matrix();
  g(kSpatialW) += da2 * c.col2.transpose();
  g(kSpatialB) += da2.rowwise().sum();
  const MatrixXd dcol2 = m.map(m.var_block(v, kSpatialW)).transpose() * da2;
  const MatrixXd dh1 = spatial_col2im(dcol2, c.h1.rows(), steps, H, W);
  const MatrixXd da3 = (dh1.array() * (1.0 - c.h1.array().square())).matrix();
  g(kTemporalW) += da3 * c.col1.transpose();
  g(kTemporalB) += da3.rowwise().sum();
}

struct WindowState {
  std::vector<VarCache> vars;
  std::vector<ArrayXd> sign;        // anchored sign per variable
  std::vector<ArrayXd> code_coord;  // sign + z_l - z_l_ref
  std::vector<MatrixXd> z_q;
  std::vector<HeadCache> heads;
};

WindowState run_window(const MicroModel& m, const Window& w, const std::vector<ArrayXd>* anchor_z) {
  const Index V = m.vars(), T = w.steps, H = w.height, W = w.width, P = w.pixels();
  if (static_cast<Index>(w.inputs.size()) != V) throw StbError("window variable count does not match the model");
  if (T != m.hyper().window) throw StbError("window length does not match the model");
  for (const auto& x : w.inputs)
    if (x.size() != (T + kHalo) * P) throw StbError("window input has the wrong size");
  const auto code = m.code();
  WindowState s;
  s.vars.resize(static_cast<std::size_t>(V));
  parallel_for(V, [&](std::ptrdiff_t v) {
    s.vars[static_cast<std::size_t>(v)] = extract(m, v, w.inputs[static_cast<std::size_t>(v)], T, H, W);
  });
  MatrixXd sum_input = MatrixXd::Zero(T * m.hyper().features, P);
  std::vector<MatrixXd> inputs;
  for (Index v = 0; v < V; ++v) {
    const ArrayXd& z = s.vars[static_cast<std::size_t>(v)].z_l;
    ArrayXd coord;
    if (anchor_z) {
      const ArrayXd& ref = (*anchor_z)[static_cast<std::size_t>(v)];
      s.sign.push_back(lfq::signs<double>(ref));
      coord = s.sign.back() + z - ref;
    } else {
      s.sign.push_back(lfq::signs<double>(z));
      coord = s.sign.back();
    }
    MatrixXd zq = code.scale * coord.matrix().transpose();
    zq.colwise() += code.offset;
    s.code_coord.push_back(std::move(coord));
    inputs.push_back(head_rows(zq, T, P));
    sum_input += inputs.back();
    s.z_q.push_back(std::move(zq));
  }
  for (Index v = 0; v < V; ++v) s.heads.push_back(run_head(m, v, std::move(inputs[static_cast<std::size_t>(v)]), H, W));
  s.heads.push_back(run_head(m, V, std::move(sum_input), H, W));
  return s;
}

}  // namespace

Window make_window(const FloatCube& values, const MaskCube* extremes, const PixelMask& valid, Index t0, Index y0,
                   Index x0, Index height, Index width, Index steps) {
  const Dims d = values.dims();
  if (y0 < 0 || x0 < 0 || y0 + height > d.lat || x0 + width > d.lon) throw StbError("window tile out of bounds");
  if (t0 < 0 || t0 >= d.time) throw StbError("window end step out of range");
  Window w;
  w.height = height;
  w.width = width;
  w.steps = steps;
  const Index P = height * width;
  w.valid.resize(P);
  for (Index y = 0; y < height; ++y)
    for (Index x = 0; x < width; ++x) w.valid[y * width + x] = valid[(y0 + y) * d.lon + x0 + x];
  for (Index v = 0; v < d.vars; ++v) {
    ArrayXd in = ArrayXd::Zero((steps + kHalo) * P);
    for (Index s = 0; s < steps + kHalo; ++s) {
      const Index t = t0 - (steps + kHalo - 1) + s;
      if (t < 0) continue;
      for (Index y = 0; y < height; ++y)
        for (Index x = 0; x < width; ++x) {
          const Index p = y * width + x;
          if (w.valid[p] > 0) in[s * P + p] = values(v, t, y0 + y, x0 + x);
        }
    }
    w.inputs.push_back(std::move(in));
  }
  w.target = ArrayXd::Zero(P);
  w.footprint = ArrayXd::Zero(P);
  if (extremes) {
    for (Index y = 0; y < height; ++y)
      for (Index x = 0; x < width; ++x) {
        const Index p = y * width + x;
        w.target[p] = (*extremes)(0, t0, y0 + y, x0 + x) ? 1.0 : 0.0;
        for (Index t = std::max<Index>(0, t0 - steps + 1); t <= t0; ++t)
          if ((*extremes)(0, t, y0 + y, x0 + x)) w.footprint[p] = 1.0;
      }
  }
  return w;
}

ForwardResult forward(const MicroModel& model, const Window& window) {
  const WindowState s = run_window(model, window, nullptr);
  ForwardResult out;
  for (const auto& c : s.vars) {
    out.z_l.push_back(c.z_l);
    out.q.push_back((c.z_l > 0.0).cast<std::uint8_t>());
  }
  for (const auto& h : s.heads) out.prob.push_back(h.prob);
  return out;
}

Anchor make_anchor(const MicroModel& model, const std::vector<Window>& batch) {
  Anchor a;
  for (const auto& w : batch) a.z_l.push_back(forward(model, w).z_l);
  a.code0 = model.code().code(0);
  return a;
}

BatchResult batch_loss(const MicroModel& m, const std::vector<Window>& batch, bool with_grad, const Anchor* anchor) {
  if (batch.empty()) throw StbError("empty batch");
  const Index V = m.vars();
  const auto& lam = m.hyper().lambdas;
  const auto code = m.code();
  const VectorXd code0 = anchor ? anchor->code0 : code.code(0);
  const std::size_t B = batch.size();

  std::vector<WindowState> states(B);
  for (std::size_t b = 0; b < B; ++b) states[b] = run_window(m, batch[b], anchor ? &anchor->z_l[b] : nullptr);

  // Batch-level statistics.
  double valid_count = 0, driver_count = 0;
  Index total_px = 0;
  for (const auto& w : batch) total_px += w.pixels();
  ArrayXd all_gt(total_px), all_valid(total_px);
  {
    Index at = 0;
    for (const auto& w : batch) {
      all_gt.segment(at, w.pixels()) = w.target;
      all_valid.segment(at, w.pixels()) = w.valid;
      at += w.pixels();
      valid_count += w.valid.sum();
      driver_count += static_cast<double>(V * w.steps) * (w.valid * (1.0 - w.footprint)).sum();
    }
  }
  if (valid_count <= 0) throw StbError("batch has no valid pixels");
  const lfq::ClassWeights cw = lfq::class_weights<double>(all_gt, all_valid);

  std::vector<std::vector<ArrayXd>> voxel_weight(B);  // per variable, T*P: valid broadcast over time
  std::vector<ArrayXd> driver_weight(B);
  lfq::QuantizeSums<double> qs;
  double extreme_sum = 0, driver_sum = 0;
  for (std::size_t b = 0; b < B; ++b) {
    const Window& w = batch[b];
    const WindowState& s = states[b];
    driver_weight[b] = (w.valid * (1.0 - w.footprint)).replicate(w.steps, 1);
    const ArrayXd vw = w.valid.replicate(w.steps, 1);
    for (Index v = 0; v < V; ++v) {
      qs.add(s.vars[static_cast<std::size_t>(v)].z_l, s.sign[static_cast<std::size_t>(v)], vw);
      driver_sum += lfq::driver_sum<double>(s.z_q[static_cast<std::size_t>(v)], code0, driver_weight[b]);
    }
    for (const auto& h : s.heads) extreme_sum += lfq::bce_sum<double>(h.prob, w.target, w.valid, cw);
    voxel_weight[b].assign(static_cast<std::size_t>(V), vw);
  }
  const auto ql = lfq::finish(qs);
  lfq::LossBreakdown parts;
  parts.extreme = extreme_sum / valid_count;
  parts.commit = ql.commit;
  parts.ent = ql.ent;
  parts.div = ql.div;
  parts.driver = driver_count > 0 ? driver_sum / driver_count : 0.0;
  BatchResult out;
  out.loss = lfq::total_loss(parts, lam);
  if (!with_grad) return out;

  std::vector<VectorXd> grads(B, VectorXd::Zero(m.params.size()));
  parallel_for(static_cast<std::ptrdiff_t>(B), [&](std::ptrdiff_t bi) {
    const auto b = static_cast<std::size_t>(bi);
    const Window& w = batch[b];
    const WindowState& s = states[b];
    VectorXd& grad = grads[b];
    const Index T = w.steps, H = w.height, W = w.width, P = w.pixels();
    const Index K = m.hyper().features;

    std::vector<MatrixXd> dz_q(static_cast<std::size_t>(V));
    for (Index v = 0; v < V; ++v) {
      const auto vs = static_cast<std::size_t>(v);
      dz_q[vs] = driver_count > 0
                     ? MatrixXd(lfq::driver_grad<double>(s.z_q[vs], code0, driver_weight[b]) * (lam.driver / driver_count))
                     : MatrixXd::Zero(K, T * P);
    }
    for (Index h = 0; h <= V; ++h) {
      const HeadCache& hc = s.heads[static_cast<std::size_t>(h)];
      const ArrayXd dlogit = lfq::bce_logit_grad<double>(hc.prob, w.target, w.valid, cw) / valid_count;
      const MatrixXd din = head_backward(m, h, hc, dlogit, H, W, grad);
      for (Index v = 0; v < V; ++v) {
        if (h < V && h != v) continue;
        MatrixXd& dz = dz_q[static_cast<std::size_t>(v)];
        for (Index t = 0; t < T; ++t) dz.middleCols(t * P, P) += din.middleRows(t * K, K);
      }
    }
    auto g_scale = Eigen::Map<MatrixXd>(grad.data() + m.code_scale().offset, K, 1);
    auto g_offset = Eigen::Map<MatrixXd>(grad.data() + m.code_offset().offset, K, 1);
    for (Index v = 0; v < V; ++v) {
      const auto vs = static_cast<std::size_t>(v);
      const MatrixXd& dz = dz_q[vs];
      g_scale += dz * s.code_coord[vs].matrix();
      g_offset += dz.rowwise().sum();
      ArrayXd dz_l = (code.scale.transpose() * dz).transpose().array();
      dz_l += lfq::quantize_grad<double>(s.vars[vs].z_l, s.sign[vs], voxel_weight[b][vs], qs, lam.commit, lam.ent,
                                         -lam.div);
      extract_backward(m, v, s.vars[vs], dz_l, T, H, W, grad);
    }
  });
  out.grad = VectorXd::Zero(m.params.size());
  for (const auto& g : grads) out.grad += g;
  return out;
}

nlohmann::json to_json(const TrainReport& r) {
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& l : r.history)
    hist.push_back({{"extreme", l.extreme},
                    {"commit", l.commit},
                    {"ent", l.ent},
                    {"div", l.div},
                    {"driver", l.driver},
                    {"total", l.total}});
  nlohmann::json j = {{"steps", r.history.size()}, {"seconds", r.seconds}, {"history", hist}};
  if (r.val_driver_f1 >= 0) j["val_driver_f1"] = r.val_driver_f1;
  if (r.val_extreme_f1 >= 0) j["val_extreme_f1"] = r.val_extreme_f1;
  return j;
}

TrainReport train(MicroModel& model, const TrainData& data, const StepCallback& on_step) {
  if (!data.values || !data.extremes || !data.valid) throw StbError("train: missing data");
  const ModelHyper& hp = model.hyper();
  const Dims d = data.values->dims();
  if (d.vars != model.vars()) throw StbError("train: dataset variable count does not match the model");
  const Index tile_h = std::min<Index>(hp.tile, d.lat), tile_w = std::min<Index>(hp.tile, d.lon);
  const Index t_lo = std::max<Index>(data.t_begin, hp.window - 1);
  if (data.t_end <= t_lo) throw StbError("train: training range is shorter than the window");

  TrainReport report;
  const auto started = std::chrono::steady_clock::now();
  Rng rng(hp.seed, "train-batches");
  VectorXd m1 = VectorXd::Zero(model.params.size()), m2 = m1;
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  const int warmup = std::max(1, static_cast<int>(std::ceil(hp.warmup_frac * hp.steps)));

  for (int step = 0; step < hp.steps; ++step) {
    std::vector<Window> batch;
    for (int tries = 0; static_cast<int>(batch.size()) < hp.batch; ++tries) {
      const Index t0 = rng.uniform_int(t_lo, data.t_end - 1);
      const Index y0 = rng.uniform_int(0, d.lat - tile_h);
      const Index x0 = rng.uniform_int(0, d.lon - tile_w);
      Window w = make_window(*data.values, data.extremes, *data.valid, t0, y0, x0, tile_h, tile_w, hp.window);
      if (w.valid.sum() > 0) batch.push_back(std::move(w));
      else if (tries > 1000) throw StbError("train: no valid pixels to sample");
    }
    BatchResult r = batch_loss(model, batch, true);
    if (!std::isfinite(r.loss.total) || !r.grad.allFinite())
      throw StbError("train: loss is NaN at step " + std::to_string(step));
    report.history.push_back(r.loss);

    const double lr = hp.lr * std::min(1.0, static_cast<double>(step + 1) / warmup);
    m1 = beta1 * m1 + (1 - beta1) * r.grad;
    m2 = beta2 * m2 + (1 - beta2) * r.grad.cwiseProduct(r.grad);
    const double c1 = 1 - std::pow(beta1, step + 1), c2 = 1 - std::pow(beta2, step + 1);
    model.params.array() -= lr * (m1.array() / c1) / ((m2.array() / c2).sqrt() + eps);

    if (model.map(model.code_scale()).cwiseAbs().maxCoeff() <= 0)
      throw StbError("train: driver and normal codes collapsed at step " + std::to_string(step));
    if (on_step) on_step(step, r.loss);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

MaskCube infer_codes(const MicroModel& model, const FloatCube& values, const PixelMask& valid, Index t_begin,
                     Index t_end) {
  const Dims d = values.dims();
  if (d.vars != model.vars()) throw StbError("inference: dataset variable count does not match the model");
  if (t_begin < 0 || t_end > d.time || t_end < t_begin) throw StbError("inference: bad time range");
  const Index n = t_end - t_begin, P = d.pixels();
  MaskCube out({d.vars, n, d.lat, d.lon});
  constexpr Index kChunk = 16;
  const Index chunks = (n + kChunk - 1) / kChunk;
  parallel_for(chunks * d.vars, [&](std::ptrdiff_t job) {
    const Index v = job % d.vars, c = job / d.vars;
    const Index s0 = t_begin + c * kChunk, steps = std::min(kChunk, t_end - s0);
    ArrayXd in = ArrayXd::Zero((steps + kHalo) * P);
    for (Index s = 0; s < steps + kHalo; ++s) {
      const Index t = s0 - kHalo + s;
      if (t < 0) continue;
      const auto slice = values.slice(v, t);
      for (Index p = 0; p < P; ++p)
        if (valid[p]) in[s * P + p] = slice[p];
    }
    const VarCache vc = extract(model, v, in, steps, d.lat, d.lon);
    for (Index s = 0; s < steps; ++s)
      out.slice(v, s0 - t_begin + s) = (vc.z_l.segment(s * P, P) > 0.0).cast<std::uint8_t>();
  });
  return out;
}

Inference infer_drivers(const MicroModel& model, const FloatCube& values, const PixelMask& valid, Index t_begin,
                        Index t_end) {
  const Dims d = values.dims();
  const Index T = model.hyper().window, K = model.hyper().features, V = d.vars, P = d.pixels();
  if (d.time < T) throw StbError("inference: series is shorter than the model window");
  const Index history = std::max<Index>(0, t_begin - T + 1);
  const MaskCube codes = infer_codes(model, values, valid, history, t_end);
  const Index n = t_end - t_begin;

  Inference out;
  out.t_begin = t_begin;
  out.drivers = MaskCube({V, n, d.lat, d.lon});
  for (Index v = 0; v < V; ++v)
    for (Index t = 0; t < n; ++t) out.drivers.slice(v, t) = codes.slice(v, t_begin - history + t) * valid;
  out.extreme_prob = FloatCube({1, n, d.lat, d.lon});

  const auto code = model.code();
  const VectorXd code1 = code.code(1), code0 = code.code(0);
  parallel_for(n, [&](std::ptrdiff_t i) {
    const Index t0 = t_begin + i;
    MatrixXd sum_input = MatrixXd::Zero(T * K, P);
    for (Index v = 0; v < V; ++v)
      for (Index s = 0; s < T; ++s) {
        const Index t = t0 - T + 1 + s;
        for (Index p = 0; p < P; ++p) {
          const bool q = t >= 0 && codes(v, t - history, p / d.lon, p % d.lon);
          sum_input.block(s * K, p, K, 1) += q ? code1 : code0;
        }
      }
    const HeadCache hc = run_head(model, V, std::move(sum_input), d.lat, d.lon);
    for (Index p = 0; p < P; ++p) out.extreme_prob(0, t0 - t_begin, p / d.lon, p % d.lon) = valid[p] ? static_cast<float>(hc.prob[p]) : 0.0f;
  });
  return out;
}

void save_checkpoint(const MicroModel& model, const std::filesystem::path& path, const nlohmann::json& extra) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : model.blocks()) blocks.push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
  nlohmann::json header = {{"format", "checkpoint"},
                           {"vars", model.vars()},
                           {"hyper", to_json(model.hyper())},
                           {"blocks", blocks},
                           {"extra", extra}};
  const SectionView sec{"params", "f64", std::as_bytes(std::span(model.params.data(), static_cast<std::size_t>(model.params.size())))};
  write_container(path, std::move(header), std::span(&sec, 1));
}

MicroModel load_checkpoint(const std::filesystem::path& path) {
  ContainerReader reader(path);
  const auto& h = reader.header();
  if (h.value("format", "") != "checkpoint") throw StbError(path.string() + ": not a model checkpoint");
  MicroModel m(h.at("vars").get<Index>(), hyper_from_json(h.at("hyper")));
  const auto& blocks = h.at("blocks");
  if (blocks.size() != m.blocks().size()) throw StbError(path.string() + ": checkpoint layout mismatch");
  for (std::size_t i = 0; i < blocks.size(); ++i)
    if (blocks[i].at("name") != m.blocks()[i].name || blocks[i].at("rows").get<Index>() != m.blocks()[i].rows ||
        blocks[i].at("cols").get<Index>() != m.blocks()[i].cols)
      throw StbError(path.string() + ": checkpoint layout mismatch at " + m.blocks()[i].name);
  reader.read_section("params", "f64",
                      std::as_writable_bytes(std::span(m.params.data(), static_cast<std::size_t>(m.params.size()))));
  return m;
}

std::string parameter_hash(const MicroModel& model) {
  return sha256_hex(std::as_bytes(std::span(model.params.data(), static_cast<std::size_t>(model.params.size()))));
}

}  // namespace stb
