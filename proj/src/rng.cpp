#include "stbench/rng.hpp"

#include <cmath>
#include <numbers>

namespace stb {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_tag(std::string_view tag) {
  // FNV-1a
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t stream_key(std::uint64_t seed, std::string_view purpose, std::uint64_t a,
                         std::uint64_t b) {
  std::uint64_t k = splitmix64(seed);
  k = splitmix64(k ^ hash_tag(purpose));
  k = splitmix64(k ^ a);
  k = splitmix64(k ^ (b * 0xd1342543de82ef95ULL));
  return k;
}

double Rng::laplace(double mean, double scale) {
  // u in (-1/2, 1/2)
  double u = uniform() - 0.5;
  while (u == -0.5) u = uniform() - 0.5;
  return mean - scale * std::copysign(1.0, u) * std::log1p(-2.0 * std::abs(u));
}

double Rng::cauchy() {
  double u = uniform();
  while (u == 0.0) u = uniform();
  return std::tan(std::numbers::pi * (u - 0.5));
}

}  // namespace stb
