#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace stb {

std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t hash_tag(std::string_view tag);

/// Seed for an independent stream keyed by (seed, purpose, a, b).
///
/// Work that may run on any thread draws from its own keyed stream, so
/// results never depend on scheduling.
std::uint64_t stream_key(std::uint64_t seed, std::string_view purpose, std::uint64_t a = 0,
                         std::uint64_t b = 0);

class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t key) : engine_(key) {}
  Rng(std::uint64_t seed, std::string_view purpose, std::uint64_t a = 0, std::uint64_t b = 0)
      : engine_(stream_key(seed, purpose, a, b)) {}

  static constexpr result_type min() { return std::mt19937_64::min(); }
  static constexpr result_type max() { return std::mt19937_64::max(); }
  result_type operator()() { return engine_(); }

  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
  }
  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal(double mean = 0.0, double stddev = 1.0) {
    return std::normal_distribution<double>(mean, stddev)(engine_);
  }
  /// Laplace(mean, scale) by inversion.
  double laplace(double mean, double scale);
  /// Standard Cauchy by inversion.
  double cauchy();
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace stb
