#include "stbench/signal.hpp"

#include "stbench/cube.hpp"
#include "stbench/parallel.hpp"

#include <cmath>
#include <numbers>

namespace stb {

void validate(const BaseSpec& spec) {
  if (spec.amp < 0) throw StbError("base amp must be >= 0");
  if ((spec.kind == BaseKind::Sine || spec.kind == BaseKind::Cosine) && spec.n_osc < 1)
    throw StbError("base nOsc must be >= 1 for trigonometric bases");
  if (spec.kind == BaseKind::FromClimatology && spec.clim_path.empty())
    throw StbError("FromClimatology base requires clim_path");
}

void validate(const NoiseSpec& spec) {
  if (!(spec.sigma > 0)) throw StbError("noise sigma must be > 0");
  if (!(spec.rho >= 0 && spec.rho < 1)) throw StbError("noise rho must be in [0,1)");
  if (!(spec.spatial_len >= 0)) throw StbError("noise spatial_len must be >= 0");
  if (spec.kind == NoiseKind::Laplace && !(spec.lambda > 0))
    throw StbError("Laplace noise lambda must be > 0");
}

Field gen_base(const BaseSpec& spec, Index time, Index lat, Index lon) {
  validate(spec);
  Field out({1, time, lat, lon});

  if (spec.kind == BaseKind::FromClimatology) {
    const auto loaded = read_cube(spec.clim_path);
    const auto& cd = loaded.cube.dims();
    if (cd.lat != lat || cd.lon != lon)
      throw StbError("climatology grid " + to_string(cd) + " does not match the generated grid");
    if (spec.clim_var < 0 || spec.clim_var >= cd.vars)
      throw StbError("clim_var out of range for " + spec.clim_path);
    for (Index t = 0; t < time; ++t)
      out.slice(0, t) = loaded.cube.values.slice(spec.clim_var, t % cd.time);
    return out;
  }

  Eigen::ArrayXf grad(lat);
  for (Index y = 0; y < lat; ++y)
    grad[y] = spec.lat_grad ? static_cast<float>(static_cast<double>(y) / static_cast<double>(lat)) : 0.0f;

  for (Index t = 0; t < time; ++t) {
    const double phase = 2.0 * std::numbers::pi * spec.n_osc * static_cast<double>(t) / static_cast<double>(time);
    double level = spec.constant;
    switch (spec.kind) {
      case BaseKind::Sine: level = spec.shift + spec.amp * std::sin(phase); break;
      case BaseKind::Cosine: level = spec.shift + spec.amp * std::cos(phase); break;
      default: break;
    }
    for (Index y = 0; y < lat; ++y)
      out.array().segment(out.offset(0, t, y, 0), lon).setConstant(static_cast<float>(level) + grad[y]);
  }
  return out;
}

Eigen::VectorXd sample_weights(const WeightSpec& spec, Index count, Rng& rng) {
  if (count < 1) throw StbError("sample_weights needs at least one weight");
  Eigen::VectorXd w(count);
  for (Index i = 0; i < count; ++i)
    w[i] = spec.dist == WeightDist::Norm ? rng.normal() : rng.laplace(0.0, std::numbers::sqrt2 / 2.0);
  return w;
}

Field couple_dependent(std::span<const Field* const> bases, const Eigen::VectorXd& weights,
                       CouplingKind kind, std::span<const MaskCube* const> disturb) {
  if (bases.empty()) throw StbError("couple_dependent needs at least one independent base");
  if (static_cast<Index>(bases.size()) != weights.size())
    throw StbError("weight count does not match base count");
  if (!disturb.empty() && disturb.size() != bases.size())
    throw StbError("disturbance mask count does not match base count");

  Field out(bases.front()->dims());
  for (std::size_t v = 0; v < bases.size(); ++v) {
    if (!(bases[v]->dims() == out.dims())) throw StbError("base shapes differ");
    Eigen::ArrayXf term = kind == CouplingKind::Linear
                              ? bases[v]->array()
                              : Eigen::ArrayXf((bases[v]->array().square() - 1.0f) *
                                               static_cast<float>(1.0 / std::numbers::sqrt2));
    Eigen::ArrayXf w = Eigen::ArrayXf::Constant(out.size(), static_cast<float>(weights[static_cast<Index>(v)]));
    if (!disturb.empty()) w *= 1.0f + 0.5f * disturb[v]->array().cast<float>();
    out.array() += w * term;
  }
  return out;
}

MaskCube union_random_masks(std::span<const MaskCube* const> masks) {
  if (masks.empty()) throw StbError("union_random_masks needs at least one mask");
  MaskCube out(masks.front()->dims());
  for (const auto* m : masks) {
    if (!(m->dims() == out.dims())) throw StbError("mask shapes differ");
    out.array() = out.array().max(m->array());
  }
  return out;
}

namespace {

Eigen::VectorXd gaussian_kernel(double length) {
  const Index radius = static_cast<Index>(std::ceil(3.0 * length));
  Eigen::VectorXd k(2 * radius + 1);
  for (Index j = -radius; j <= radius; ++j)
    k[j + radius] = std::exp(-0.5 * static_cast<double>(j * j) / (length * length));
  return k;
}

// Variance-preserving 1-D smoothing of `n` values spaced `stride` apart.
void smooth_line(float* line, Index n, Index stride, const Eigen::VectorXd& k, std::vector<double>& tmp) {
  const Index radius = (k.size() - 1) / 2;
  tmp.assign(static_cast<std::size_t>(n), 0.0);
  for (Index i = 0; i < n; ++i) {
    double acc = 0.0, norm = 0.0;
    for (Index j = std::max<Index>(-radius, -i); j <= std::min<Index>(radius, n - 1 - i); ++j) {
      acc += k[j + radius] * line[(i + j) * stride];
      norm += k[j + radius] * k[j + radius];
    }
    tmp[static_cast<std::size_t>(i)] = acc / std::sqrt(norm);
  }
  for (Index i = 0; i < n; ++i) line[i * stride] = static_cast<float>(tmp[static_cast<std::size_t>(i)]);
}

}  // namespace

Field gen_noise(const NoiseSpec& spec, Index time, Index lat, Index lon, std::uint64_t stream_root) {
  validate(spec);
  Field out({1, time, lat, lon});
  const Index pixels = lat * lon;

  parallel_for(time, [&](std::ptrdiff_t t) {
    Rng rng(stream_key(stream_root, "noise-slice", static_cast<std::uint64_t>(t)));
    float* s = out.data() + t * pixels;
    for (Index p = 0; p < pixels; ++p) {
      double x = 0.0;
      switch (spec.kind) {
        case NoiseKind::White: x = rng.normal(spec.meu, spec.sigma); break;
        case NoiseKind::Laplace: x = rng.laplace(spec.meu, spec.sigma * spec.lambda); break;
        case NoiseKind::Cauchy: x = spec.meu + spec.sigma * rng.cauchy(); break;
        case NoiseKind::Red: x = rng.normal(); break;
      }
      s[p] = static_cast<float>(x);
    }
    if (spec.kind == NoiseKind::Red && spec.spatial_len > 0) {
      const auto k = gaussian_kernel(spec.spatial_len);
      std::vector<double> tmp;
      for (Index y = 0; y < lat; ++y) smooth_line(s + y * lon, lon, 1, k, tmp);
      for (Index x = 0; x < lon; ++x) smooth_line(s + x, lat, lon, k, tmp);
    }
  });

  if (spec.kind == NoiseKind::Red) {
    // Unit-variance stationary AR(1): y_t = rho*y_{t-1} + sqrt(1-rho^2)*e_t.
    const float rho = static_cast<float>(spec.rho);
    const float innov = static_cast<float>(std::sqrt(1.0 - spec.rho * spec.rho));
    for (Index t = 1; t < time; ++t)
      out.slice(0, t) = rho * out.slice(0, t - 1) + innov * out.slice(0, t);
    out.array() = static_cast<float>(spec.meu) + static_cast<float>(spec.sigma) * out.array();
  }
  return out;
}

std::string to_string(BaseKind k) {
  switch (k) {
    case BaseKind::Sine: return "Sine";
    case BaseKind::Cosine: return "Cosine";
    case BaseKind::Constant: return "Constant";
    case BaseKind::FromClimatology: return "FromClimatology";
  }
  return "?";
}
std::string to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::White: return "White";
    case NoiseKind::Laplace: return "Laplace";
    case NoiseKind::Cauchy: return "Cauchy";
    case NoiseKind::Red: return "Red";
  }
  return "?";
}
std::string to_string(WeightDist k) { return k == WeightDist::Norm ? "NormWeight" : "LaplaceWeight"; }
std::string to_string(CouplingKind k) {
  return k == CouplingKind::Linear ? "LinearCoupling" : "QuadraticCoupling";
}

BaseKind parse_base_kind(const std::string& s) {
  if (s == "Sine" || s == "SineBase") return BaseKind::Sine;
  if (s == "Cosine" || s == "CosineBase") return BaseKind::Cosine;
  if (s == "Constant" || s == "ConstantBase") return BaseKind::Constant;
  if (s == "FromClimatology") return BaseKind::FromClimatology;
  throw StbError("unknown base kind '" + s + "'");
}
NoiseKind parse_noise_kind(const std::string& s) {
  if (s == "White" || s == "WhiteNoise" || s == "Gaussian" || s == "GaussianNoise") return NoiseKind::White;
  if (s == "Laplace" || s == "LaplaceNoise") return NoiseKind::Laplace;
  if (s == "Cauchy" || s == "CauchyNoise") return NoiseKind::Cauchy;
  if (s == "Red" || s == "RedNoise") return NoiseKind::Red;
  throw StbError("unknown noise kind '" + s + "'");
}
WeightDist parse_weight_dist(const std::string& s) {
  if (s == "Norm" || s == "NormWeight") return WeightDist::Norm;
  if (s == "Laplace" || s == "LaplaceWeight") return WeightDist::Laplace;
  throw StbError("unknown weight distribution '" + s + "'");
}
CouplingKind parse_coupling_kind(const std::string& s) {
  if (s == "Linear" || s == "LinearCoupling") return CouplingKind::Linear;
  if (s == "Quadratic" || s == "QuadraticCoupling") return CouplingKind::Quadratic;
  throw StbError("unknown coupling kind '" + s + "'");
}

}  // namespace stb
