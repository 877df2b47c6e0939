#include "stbench/cube.hpp"

#include "stbench/container.hpp"
#include "stbench/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace stb {
namespace {

template <typename Scalar>
std::span<const std::byte> bytes_of(const Cube4<Scalar>& c) {
  return std::as_bytes(std::span<const Scalar>(c.data(), static_cast<std::size_t>(c.size())));
}

template <typename Scalar>
std::span<std::byte> writable_bytes_of(Cube4<Scalar>& c) {
  return std::as_writable_bytes(std::span<Scalar>(c.data(), static_cast<std::size_t>(c.size())));
}

Index checked_product(std::initializer_list<std::int64_t> extents) {
  std::int64_t p = 1;
  for (auto e : extents) {
    if (e < 1) throw StbError("corrupt header: dims must be positive");
    if (p > std::numeric_limits<std::int64_t>::max() / 4 / e)
      throw StbError("dimension overflow in header fields");
    p *= e;
  }
  return p;
}

}  // namespace

Index DataCube::valid_count() const {
  return static_cast<Index>(valid.cast<Index>().sum());
}

void DataCube::validate() const {
  const auto& d = dims();
  if (d.vars < 1 || d.time < 1 || d.lat < 1 || d.lon < 1)
    throw StbError("datacube dims must be >= 1, got " + to_string(d));
  if (static_cast<Index>(var_names.size()) != d.vars)
    throw StbError("var_names length does not match V");
  if (!units.empty() && static_cast<Index>(units.size()) != d.vars)
    throw StbError("units length does not match V");
  if (valid.size() != d.pixels()) throw StbError("valid mask size does not match Lat*Lon");
}

void write_cube(const DataCube& cube, const MaskSet* masks, const std::filesystem::path& path) {
  cube.validate();
  const auto& d = cube.dims();
  checked_product({d.vars, d.time, d.lat, d.lon});

  nlohmann::json header;
  header["format"] = "datacube";
  header["dims"] = {d.vars, d.time, d.lat, d.lon};
  header["layout"] = "V,T,Lat,Lon C-order little-endian";
  header["var_names"] = cube.var_names;
  header["units"] = cube.units.empty() ? std::vector<std::string>(d.vars, "") : cube.units;
  header["weeks_per_year"] = cube.weeks_per_year;
  header["normalizer"] = "std";
  header["attrs"] = cube.attrs;

  std::vector<SectionView> sections;
  sections.push_back({"values", "f32", bytes_of(cube.values)});
  sections.push_back({"valid", "u8",
                      std::as_bytes(std::span<const std::uint8_t>(
                          cube.valid.data(), static_cast<std::size_t>(cube.valid.size())))});
  if (masks) {
    const Dims ex{1, d.time, d.lat, d.lon};
    if (!(masks->extremes.dims() == ex) || !(masks->drivers.dims() == d) ||
        !(masks->random_anoms.dims() == d))
      throw StbError("mask shapes do not match cube dims " + to_string(d));
    sections.push_back({"extremes", "u8", bytes_of(masks->extremes)});
    sections.push_back({"drivers", "u8", bytes_of(masks->drivers)});
    sections.push_back({"random_anoms", "u8", bytes_of(masks->random_anoms)});
  }
  write_container(path, std::move(header), sections);
}

LoadedCube read_cube(const std::filesystem::path& path) {
  ContainerReader reader(path);
  const auto& h = reader.header();
  if (h.value("format", "") != "datacube") throw StbError("not a datacube STDC file: " + path.string());

  LoadedCube out;
  Dims d;
  try {
    const auto dims = h.at("dims").get<std::vector<std::int64_t>>();
    if (dims.size() != 4) throw StbError("corrupt header: dims must have 4 entries");
    checked_product({dims[0], dims[1], dims[2], dims[3]});
    d = Dims{dims[0], dims[1], dims[2], dims[3]};
    out.cube.var_names = h.at("var_names").get<std::vector<std::string>>();
    out.cube.units = h.at("units").get<std::vector<std::string>>();
    out.cube.weeks_per_year = h.at("weeks_per_year").get<int>();
    out.cube.attrs = h.value("attrs", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw StbError(std::string("corrupt header: ") + e.what());
  }

  out.cube.values = FloatCube(d);
  reader.read_section("values", "f32", writable_bytes_of(out.cube.values));
  out.cube.valid = PixelMask::Zero(d.pixels());
  reader.read_section("valid", "u8",
                      std::as_writable_bytes(std::span<std::uint8_t>(
                          out.cube.valid.data(), static_cast<std::size_t>(d.pixels()))));
  out.cube.validate();

  if (reader.has_section("extremes")) {
    MaskSet m{MaskCube({1, d.time, d.lat, d.lon}), MaskCube(d), MaskCube(d)};
    reader.read_section("extremes", "u8", writable_bytes_of(m.extremes));
    reader.read_section("drivers", "u8", writable_bytes_of(m.drivers));
    reader.read_section("random_anoms", "u8", writable_bytes_of(m.random_anoms));
    out.masks = std::move(m);
  }
  return out;
}

Climatology compute_climatology(const DataCube& cube, int year_begin, int year_end) {
  const auto& d = cube.dims();
  const int weeks = cube.weeks_per_year;
  if (weeks < 1 || d.time % weeks != 0)
    throw StbError("cube T=" + std::to_string(d.time) + " is not a multiple of " +
                   std::to_string(weeks));
  const int years = static_cast<int>(d.time / weeks);
  if (year_begin < 0 || year_end > years || year_begin >= year_end)
    throw StbError("year range outside cube span");
  const int n = year_end - year_begin;
  if (n < 2) throw StbError("climatology needs at least 2 years, got " + std::to_string(n));

  const Dims cd{d.vars, weeks, d.lat, d.lon};
  Climatology clim{FloatCube(cd), FloatCube(cd)};

  parallel_for(d.vars * weeks, [&](std::ptrdiff_t job) {
    const Index v = job / weeks;
    const Index w = job % weeks;
    std::vector<double> samples(static_cast<std::size_t>(n));
    for (Index p = 0; p < d.pixels(); ++p) {
      double mean = 0.0;
      for (int y = 0; y < n; ++y) {
        const Index t = static_cast<Index>(year_begin + y) * weeks + w;
        samples[static_cast<std::size_t>(y)] = cube.values.data()[cube.values.offset(v, t, 0, 0) + p];
        mean += samples[static_cast<std::size_t>(y)];
      }
      mean /= n;
      double var = 0.0;
      for (double s : samples) var += (s - mean) * (s - mean);
      var /= n;

      const auto mid = samples.begin() + n / 2;
      std::nth_element(samples.begin(), mid, samples.end());
      double median = *mid;
      if (n % 2 == 0) median = 0.5 * (median + *std::max_element(samples.begin(), mid));

      const Index o = clim.median_cycle.offset(v, w, 0, 0) + p;
      clim.median_cycle.data()[o] = static_cast<float>(median);
      clim.std_cycle.data()[o] = std::max(static_cast<float>(std::sqrt(var)), kStdFloor);
    }
  });
  return clim;
}

DataCube deseasonalize(const DataCube& cube, const Climatology& clim) {
  const auto& d = cube.dims();
  const auto& cd = clim.median_cycle.dims();
  const int weeks = cube.weeks_per_year;
  if (cd.vars != d.vars || cd.time != weeks || cd.lat != d.lat || cd.lon != d.lon ||
      !(clim.std_cycle.dims() == cd))
    throw StbError("climatology shape " + to_string(cd) + " does not match cube " + to_string(d));

  DataCube out;
  out.values = FloatCube(d);
  out.var_names = cube.var_names;
  out.units = std::vector<std::string>(cube.var_names.size(), "std");
  out.valid = cube.valid;
  out.weeks_per_year = weeks;
  out.attrs = cube.attrs;

  const Eigen::ArrayXf validf = cube.valid.cast<float>();
  parallel_for(d.vars * d.time, [&](std::ptrdiff_t job) {
    const Index v = job / d.time;
    const Index t = job % d.time;
    const Index w = t % weeks;
    auto src = cube.values.slice(v, t);
    auto med = clim.median_cycle.slice(v, w);
    auto sd = clim.std_cycle.slice(v, w);
    // select() keeps NaN at invalid pixels from leaking through a multiply.
    out.values.slice(v, t) = (validf > 0.0f).select((src - med) / sd, 0.0f);
  });
  return out;
}

std::pair<int, int> split_years(const DataCube& cube, const std::string& split) {
  if (!cube.attrs.contains("split") || !cube.attrs["split"].contains(split))
    throw StbError("split '" + split + "' missing from dataset metadata");
  const auto r = cube.attrs["split"][split].get<std::vector<int>>();
  if (r.size() != 2 || r[0] >= r[1]) throw StbError("malformed split '" + split + "'");
  return {r[0], r[1]};
}

}  // namespace stb
