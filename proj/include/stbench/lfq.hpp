#pragma once

// Lookup-free binary quantization and the loss terms trained through it.
//
// Codes are column vectors: a field of N voxels quantizes to a K x N matrix
// whose columns are one of two vectors, code(1) = scale + offset and
// code(0) = offset - scale. Every loss comes with its gradient so the
// model's backward pass can chain them.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace stb::lfq {

template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Arr = Eigen::Array<S, Eigen::Dynamic, 1>;
using Bits = Eigen::Array<std::uint8_t, Eigen::Dynamic, 1>;

inline constexpr double kProbClamp = 1e-7;
inline constexpr double kClassWeightFloor = 0.5;

struct LossWeights {
  double commit = 3.0;
  double ent = 0.1;
  double div = 0.1;
  double driver = 100.0;
};

struct LossBreakdown {
  double extreme = 0.0;
  double commit = 0.0;
  double ent = 0.0;
  double div = 0.0;
  double driver = 0.0;
  double total = 0.0;
};

/// Shared affine map from a sign value back to K dimensions.
template <typename S>
struct AffineCode {
  Vec<S> scale;
  Vec<S> offset;

  Vec<S> code(int q) const { return q ? Vec<S>(offset + scale) : Vec<S>(offset - scale); }
  Eigen::Index dim() const { return scale.size(); }
};

/// -1 for z <= 0, +1 otherwise.
template <typename S>
S code_sign(S z) {
  return z > S(0) ? S(1) : S(-1);
}

template <typename S>
Arr<S> signs(const Arr<S>& z_l) {
  return z_l.unaryExpr([](S z) { return code_sign(z); });
}

template <typename S>
struct Quantized {
  Mat<S> z_q;  // K x N
  Bits q;      // N
};

template <typename S>
Quantized<S> lfq_quantize(const Arr<S>& z_l, const AffineCode<S>& code) {
  Quantized<S> out;
  out.q = (z_l > S(0)).template cast<std::uint8_t>();
  const Arr<S> sign = signs(z_l);
  out.z_q = code.scale * sign.matrix().transpose();
  out.z_q.colwise() += code.offset;
  return out;
}

/// Nearest code by squared Euclidean distance; ties go to the lower index.
template <typename S>
int vq_assign(const Vec<S>& z, const Mat<S>& codebook) {
  if (codebook.rows() == 0) throw std::invalid_argument("vq_assign: empty codebook");
  if (codebook.cols() != z.size()) throw std::invalid_argument("vq_assign: dimension mismatch");
  int best = 0;
  S best_d = (codebook.row(0).transpose() - z).squaredNorm();
  for (Eigen::Index i = 1; i < codebook.rows(); ++i) {
    const S d = (codebook.row(i).transpose() - z).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

struct ClassWeights {
  double negative = 1.0;
  double positive = 1.0;
};

/// max(ln(1/sqrt(f_c)), floor) from the relative class frequencies in `gt`
/// over pixels with mask > 0.
template <typename S>
ClassWeights class_weights(const Arr<S>& gt, const Arr<S>& mask) {
  const double total = static_cast<double>(mask.sum());
  if (total <= 0) return {};
  const double pos = static_cast<double>((gt * mask).sum()) / total;
  auto weight = [](double f) {
    return f > 0 ? std::max(-0.5 * std::log(f), kClassWeightFloor) : kClassWeightFloor;
  };
  return {weight(1.0 - pos), weight(pos)};
}

template <typename S>
S clamp_prob(S p) {
  return std::clamp(p, S(kProbClamp), S(1.0 - kProbClamp));
}

/// Class-weighted binary cross entropy of one head, summed over masked
/// pixels (not yet normalized).
template <typename S>
S bce_sum(const Arr<S>& prob, const Arr<S>& gt, const Arr<S>& mask, const ClassWeights& w) {
  S acc = 0;
  for (Eigen::Index i = 0; i < prob.size(); ++i) {
    if (mask[i] <= 0) continue;
    const S p = clamp_prob(prob[i]);
    acc -= gt[i] > 0 ? S(w.positive) * std::log(p) : S(w.negative) * std::log(S(1) - p);
  }
  return acc;
}

/// d bce_sum / d logit for prob = logistic(logit); zero where clamped.
template <typename S>
Arr<S> bce_logit_grad(const Arr<S>& prob, const Arr<S>& gt, const Arr<S>& mask, const ClassWeights& w) {
  Arr<S> g = Arr<S>::Zero(prob.size());
  for (Eigen::Index i = 0; i < prob.size(); ++i) {
    if (mask[i] <= 0) continue;
    if (prob[i] < S(kProbClamp) || prob[i] > S(1.0 - kProbClamp)) continue;
    g[i] = (gt[i] > 0 ? S(w.positive) : S(w.negative)) * (prob[i] - gt[i]);
  }
  return g;
}

/// Extreme loss over V+1 heads: sum of weighted BCE normalized by |mask|.
template <typename S>
S loss_extreme(const std::vector<Arr<S>>& heads, const Arr<S>& gt, const Arr<S>& mask, const ClassWeights& w) {
  const S count = mask.sum();
  if (count <= 0) throw std::invalid_argument("loss_extreme: empty valid mask");
  S acc = 0;
  for (const auto& h : heads) acc += bce_sum(h, gt, mask, w);
  return acc / count;
}

template <typename S>
S softplus(S x) {
  return x > S(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

/// Soft code probability p = logistic(2 z).
template <typename S>
S code_prob(S z) {
  return S(1) / (S(1) + std::exp(S(-2) * z));
}

/// Bernoulli entropy of logistic(a), stable for large |a|.
template <typename S>
S entropy_of_logit(S a) {
  const S p = S(1) / (S(1) + std::exp(-a));
  return p * softplus(-a) + (S(1) - p) * softplus(a);
}

template <typename S>
S bernoulli_entropy(S p) {
  p = std::clamp(p, S(0), S(1));
  S h = 0;
  if (p > 0) h -= p * std::log(p);
  if (p < 1) h -= (S(1) - p) * std::log(S(1) - p);
  return h;
}

/// Running sums for the quantization losses, so batches can span tiles.
template <typename S>
struct QuantizeSums {
  S commit = 0;
  S ent = 0;
  S prob = 0;
  S count = 0;

  void add(const Arr<S>& z_l, const Arr<S>& weight) { add(z_l, signs(z_l), weight); }

  /// `sign` is held constant (stop-gradient) inside the commitment term.
  void add(const Arr<S>& z_l, const Arr<S>& sign, const Arr<S>& weight) {
    for (Eigen::Index i = 0; i < z_l.size(); ++i) {
      if (weight[i] <= 0) continue;
      const S z = z_l[i];
      const S r = z - sign[i];
      commit += weight[i] * r * r;
      ent += weight[i] * entropy_of_logit(S(2) * z);
      prob += weight[i] * code_prob(z);
      count += weight[i];
    }
  }
  S mean_prob() const { return count > 0 ? prob / count : S(0.5); }
};

template <typename S>
struct QuantizeLoss {
  S commit = 0;
  S ent = 0;
  S div = 0;
};

template <typename S>
QuantizeLoss<S> finish(const QuantizeSums<S>& s) {
  if (s.count <= 0) return {};
  return {s.commit / s.count, s.ent / s.count, bernoulli_entropy(s.mean_prob())};
}

/// (commit, ent, div) of a z_l field, every element weighted equally.
template <typename S>
QuantizeLoss<S> loss_quantize(const Arr<S>& z_l) {
  QuantizeSums<S> sums;
  sums.add(z_l, Arr<S>::Ones(z_l.size()));
  return finish(sums);
}

/// Gradient of (c_commit*commit + c_ent*ent + c_div*div) w.r.t. each z_l,
/// given the batch sums. The sign inside commit is a constant.
template <typename S>
Arr<S> quantize_grad(const Arr<S>& z_l, const Arr<S>& sign, const Arr<S>& weight, const QuantizeSums<S>& sums,
                     S c_commit, S c_ent, S c_div) {
  Arr<S> g = Arr<S>::Zero(z_l.size());
  if (sums.count <= 0) return g;
  const S pbar = std::clamp(sums.mean_prob(), S(1e-12), S(1) - S(1e-12));
  const S ddiv_dp = std::log((S(1) - pbar) / pbar);
  for (Eigen::Index i = 0; i < z_l.size(); ++i) {
    if (weight[i] <= 0) continue;
    const S z = z_l[i];
    const S p = code_prob(z);
    const S dp_dz = S(2) * p * (S(1) - p);
    // dH(p)/dz = ln((1-p)/p) * dp/dz and ln((1-p)/p) = -2z.
    const S dent = S(-2) * z * dp_dz;
    g[i] = weight[i] / sums.count * (c_commit * S(2) * (z - sign[i]) + c_ent * dent + c_div * ddiv_dp * dp_dz);
  }
  return g;
}

template <typename S>
Arr<S> quantize_grad(const Arr<S>& z_l, const Arr<S>& weight, const QuantizeSums<S>& sums, S c_commit, S c_ent,
                     S c_div) {
  return quantize_grad(z_l, signs(z_l), weight, sums, c_commit, c_ent, c_div);
}

/// Sum of w_i * |z_q(:,i) - code0|_1 (not yet normalized). `code0` is
/// treated as a constant.
template <typename S>
S driver_sum(const Mat<S>& z_q, const Vec<S>& code0, const Arr<S>& weight) {
  S acc = 0;
  for (Eigen::Index i = 0; i < z_q.cols(); ++i)
    if (weight[i] > 0) acc += weight[i] * (z_q.col(i) - code0).cwiseAbs().sum();
  return acc;
}

/// d driver_sum / d z_q; sign(0) = 0.
template <typename S>
Mat<S> driver_grad(const Mat<S>& z_q, const Vec<S>& code0, const Arr<S>& weight) {
  Mat<S> g = Mat<S>::Zero(z_q.rows(), z_q.cols());
  for (Eigen::Index i = 0; i < z_q.cols(); ++i) {
    if (weight[i] <= 0) continue;
    for (Eigen::Index k = 0; k < z_q.rows(); ++k) {
      const S d = z_q(k, i) - code0[k];
      g(k, i) = d > 0 ? weight[i] : (d < 0 ? -weight[i] : S(0));
    }
  }
  return g;
}

/// Mean L1 distance to the normal code over voxels outside the extreme
/// footprint: weights are (1 - footprint) * valid.
template <typename S>
S loss_driver(const Mat<S>& z_q, const Vec<S>& code0, const Arr<S>& footprint, const Arr<S>& valid) {
  const Arr<S> w = (S(1) - footprint) * valid;
  const S count = w.sum();
  if (count <= 0) return S(0);
  return driver_sum(z_q, code0, w) / count;
}

inline LossBreakdown total_loss(LossBreakdown parts, const LossWeights& w) {
  parts.total = parts.extreme + w.commit * parts.commit + w.ent * parts.ent - w.div * parts.div + w.driver * parts.driver;
  return parts;
}

}  // namespace stb::lfq
