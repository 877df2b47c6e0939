#pragma once

#include <Eigen/Core>

#include <array>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace stb {

using Index = std::ptrdiff_t;

/// Extents of a (variable, time, lat, lon) array.
struct Dims {
  Index vars = 1;
  Index time = 1;
  Index lat = 1;
  Index lon = 1;

  Index pixels() const { return lat * lon; }
  Index slab() const { return time * lat * lon; }
  Index size() const { return vars * time * lat * lon; }
  bool operator==(const Dims&) const = default;
};

inline std::string to_string(const Dims& d) {
  return "(" + std::to_string(d.vars) + "," + std::to_string(d.time) + "," +
         std::to_string(d.lat) + "," + std::to_string(d.lon) + ")";
}

/// Dense C-order 4-D array backed by an Eigen column array.
template <typename Scalar>
class Cube4 {
 public:
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  Cube4() = default;
  explicit Cube4(const Dims& d) : dims_(d), data_(Storage::Zero(d.size())) {}
  Cube4(const Dims& d, Scalar fill) : dims_(d), data_(Storage::Constant(d.size(), fill)) {}

  const Dims& dims() const { return dims_; }
  Index size() const { return data_.size(); }

  Index offset(Index v, Index t, Index y, Index x) const {
    return ((v * dims_.time + t) * dims_.lat + y) * dims_.lon + x;
  }
  Scalar& operator()(Index v, Index t, Index y, Index x) { return data_[offset(v, t, y, x)]; }
  Scalar operator()(Index v, Index t, Index y, Index x) const { return data_[offset(v, t, y, x)]; }

  Storage& array() { return data_; }
  const Storage& array() const { return data_; }
  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }

  /// One (lat, lon) slice as a contiguous segment.
  auto slice(Index v, Index t) { return data_.segment(offset(v, t, 0, 0), dims_.pixels()); }
  auto slice(Index v, Index t) const { return data_.segment(offset(v, t, 0, 0), dims_.pixels()); }
  /// Every time step of one variable.
  auto variable(Index v) { return data_.segment(v * dims_.slab(), dims_.slab()); }
  auto variable(Index v) const { return data_.segment(v * dims_.slab(), dims_.slab()); }

  bool operator==(const Cube4& o) const {
    return dims_ == o.dims_ && (data_.size() == 0 || (data_ == o.data_).all());
  }

 private:
  Dims dims_{0, 0, 0, 0};
  Storage data_;
};

/// Steps [t_begin, t_end) of every variable.
template <typename Scalar>
Cube4<Scalar> slice_time(const Cube4<Scalar>& c, Index t_begin, Index t_end) {
  const Dims d = c.dims();
  if (t_begin < 0 || t_end > d.time || t_end < t_begin) throw std::out_of_range("slice_time: bad range");
  Cube4<Scalar> out({d.vars, t_end - t_begin, d.lat, d.lon});
  for (Index v = 0; v < d.vars; ++v)
    out.variable(v) = c.array().segment(c.offset(v, t_begin, 0, 0), (t_end - t_begin) * d.pixels());
  return out;
}

using FloatCube = Cube4<float>;
using MaskCube = Cube4<std::uint8_t>;

/// (Lat, Lon) binary mask.
using PixelMask = Eigen::Array<std::uint8_t, Eigen::Dynamic, 1>;

class StbError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace stb
