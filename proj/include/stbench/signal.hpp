#pragma once

#include "stbench/rng.hpp"
#include "stbench/types.hpp"

#include <Eigen/Core>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace stb {

/// Single-variable (1, T, Lat, Lon) field.
using Field = FloatCube;

enum class BaseKind { Sine, Cosine, Constant, FromClimatology };
enum class NoiseKind { White, Laplace, Cauchy, Red };
enum class WeightDist { Norm, Laplace };
enum class CouplingKind { Linear, Quadratic };

struct BaseSpec {
  BaseKind kind = BaseKind::Constant;
  double shift = 0.0;
  double amp = 0.0;
  int n_osc = 1;
  double constant = 0.0;
  bool lat_grad = false;
  std::string clim_path;
  int clim_var = 0;
};

struct NoiseSpec {
  NoiseKind kind = NoiseKind::White;
  double meu = 0.0;
  double sigma = 1.0;
  double lambda = 1.0;       // Laplace scale factor
  double rho = 0.9;          // Red: AR(1) coefficient in time
  double spatial_len = 2.0;  // Red: Gaussian kernel length in pixels
};

struct WeightSpec {
  WeightDist dist = WeightDist::Norm;
  bool disturbed = false;
};

void validate(const BaseSpec& spec);
void validate(const NoiseSpec& spec);

Field gen_base(const BaseSpec& spec, Index time, Index lat, Index lon);

Eigen::VectorXd sample_weights(const WeightSpec& spec, Index count, Rng& rng);

/// Dependent base from independent bases. When `disturb` is given, weight v is
/// scaled by (1 + 0.5 * disturb[v]) voxelwise.
Field couple_dependent(std::span<const Field* const> bases, const Eigen::VectorXd& weights,
                       CouplingKind kind, std::span<const MaskCube* const> disturb = {});

MaskCube union_random_masks(std::span<const MaskCube* const> masks);

/// Noise field drawn from keyed per-time-slice streams rooted at `stream_root`,
/// so output is identical for any thread count.
Field gen_noise(const NoiseSpec& spec, Index time, Index lat, Index lon, std::uint64_t stream_root);

std::string to_string(BaseKind k);
std::string to_string(NoiseKind k);
std::string to_string(WeightDist k);
std::string to_string(CouplingKind k);
BaseKind parse_base_kind(const std::string& s);
NoiseKind parse_noise_kind(const std::string& s);
WeightDist parse_weight_dist(const std::string& s);
CouplingKind parse_coupling_kind(const std::string& s);

}  // namespace stb
