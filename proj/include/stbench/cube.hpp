#pragma once

#include "stbench/types.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace stb {

inline constexpr int kWeeksPerYear = 52;
inline constexpr float kStdFloor = 1e-6f;

struct DataCube {
  FloatCube values;
  std::vector<std::string> var_names;
  std::vector<std::string> units;
  PixelMask valid;  // Lat*Lon, 1 = valid
  int weeks_per_year = kWeeksPerYear;
  /// Free-form provenance: seed, config hash, split years, coupling matrix.
  nlohmann::json attrs = nlohmann::json::object();

  const Dims& dims() const { return values.dims(); }
  Index valid_count() const;
  void validate() const;
};

/// Ground truth. `extremes` has a single variable plane.
struct MaskSet {
  MaskCube extremes;
  MaskCube drivers;
  MaskCube random_anoms;

  bool operator==(const MaskSet&) const = default;
};

struct Climatology {
  FloatCube median_cycle;  // (V, weeks, Lat, Lon)
  FloatCube std_cycle;
};

struct LoadedCube {
  DataCube cube;
  std::optional<MaskSet> masks;
};

void write_cube(const DataCube& cube, const MaskSet* masks, const std::filesystem::path& path);
LoadedCube read_cube(const std::filesystem::path& path);

/// Per-pixel median and standard deviation (floored) of each week of year
/// over years [year_begin, year_end).
Climatology compute_climatology(const DataCube& cube, int year_begin, int year_end);

/// (value - median) / std per week of year; invalid pixels become 0.
DataCube deseasonalize(const DataCube& cube, const Climatology& clim);

/// Year range [begin, end) of a named split stored in cube attrs.
std::pair<int, int> split_years(const DataCube& cube, const std::string& split);

}  // namespace stb
