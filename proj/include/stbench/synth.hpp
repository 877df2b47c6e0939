#pragma once

#include "stbench/cube.hpp"
#include "stbench/events.hpp"
#include "stbench/signal.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace stb {

struct DependencySpec {
  CouplingKind kind = CouplingKind::Linear;
  WeightSpec weights;
};

struct VariableConfig {
  std::string name;
  std::string units;
  std::optional<BaseSpec> base;              // independent variable
  std::optional<DependencySpec> dependency;  // dependent on all independents
  NoiseSpec noise;
  std::vector<EventSpec> events;  // random anomalies
  double kb = 0.0;
  double kn = 0.0;
  double ks = 0.0;
  int delta = 0;  // 0 = unspecified
};

struct GenConfig {
  Index lat = 1;
  Index lon = 1;
  int years = 2;
  int weeks_per_year = kWeeksPerYear;
  int years_train = 1;
  int years_val = 0;
  int years_test = 1;
  std::vector<VariableConfig> variables;
  std::vector<EventSpec> extremes;
  int coupled_count = 0;
  int lead_max = 0;
  int lag_max = 0;
  std::uint64_t seed = 0;
  /// Pixels excluded from the valid mask: {lat0, lat1, lon0, lon1}, half-open.
  std::vector<std::array<int, 4>> invalid_boxes;

  Dims dims() const {
    return {static_cast<Index>(variables.size()), static_cast<Index>(years) * weeks_per_year, lat, lon};
  }
  std::vector<std::string> names() const;
};

/// Throws StbError with a field path (e.g. "variables[2].noise.sigma") on failure.
void validate(const GenConfig& config);

GenConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GenConfig& config);
/// TOML unless the extension is .json.
nlohmann::json load_config_document(const std::filesystem::path& path);
GenConfig load_gen_config(const std::filesystem::path& path);
/// SHA-256 (hex) of the canonical JSON form.
std::string config_hash(const GenConfig& config);
std::string sha256_hex(std::span<const std::byte> bytes);
std::string file_sha256(const std::filesystem::path& path);

struct SynthesisReport {
  double pct_extreme = 0.0;
  double pct_correlated = 0.0;
  double pct_random = 0.0;
  std::vector<std::int64_t> driver_counts;
  std::vector<std::int64_t> random_counts;
  std::string config_hash;
};

/// One voxel of the generator: b + Lambda * Theta. Anomaly bits are 0/1.
double synthesize_point(double b, double n, int e_a, int e_r, int e_ex, double kb, double kn, double ks,
                        double sigma_n, int delta);

PixelMask build_valid_mask(const GenConfig& config);

struct MaskPlan {
  MaskSet masks;
  CouplingMatrix coupling;
  PixelMask valid;
  std::vector<EventRecord> ledger;
};

/// Extremes, coupling, drivers and random anomalies without any values.
MaskPlan synthesize_masks(const GenConfig& config);

struct Dataset {
  DataCube cube;
  MaskSet masks;
  CouplingMatrix coupling;
  SynthesisReport report;
  std::vector<EventRecord> ledger;
};

Dataset synthesize_dataset(const GenConfig& config);

SynthesisReport ratio_report(const MaskSet& masks, const PixelMask& valid);
nlohmann::json to_json(const SynthesisReport& report, const std::vector<std::string>& names);

/// Split years as attrs["split"] entries.
nlohmann::json split_attrs(const GenConfig& config);

}  // namespace stb
