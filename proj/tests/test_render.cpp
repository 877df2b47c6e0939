#include "stbench/render.hpp"

#include <doctest.h>

#include <filesystem>
#include <set>

using namespace stb;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "stbench-tests";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("linear gray mapping") {
  Eigen::ArrayXd f(4);
  f << 0, 1, 2, 3;
  const auto g = to_gray(f, 0, 3);
  CHECK(g == std::vector<std::uint8_t>{0, 85, 170, 255});
  const auto path = temp_file("gray.pgm");
  render_slice(f, 2, 2, 0, 3, path);
  const Image img = read_pnm(path);
  CHECK(img.width == 2);
  CHECK(img.height == 2);
  CHECK(img.channels == 1);
  CHECK(img.pixels == g);
}

TEST_CASE("a constant field renders uniform gray") {
  const Eigen::ArrayXd f = Eigen::ArrayXd::Constant(9, 4.2);
  for (auto b : to_gray(f, 4.2, 4.2)) CHECK(b == 128);
  CHECK_THROWS_AS(to_gray(f, 0, std::numeric_limits<double>::infinity()), StbError);
}

TEST_CASE("binary masks render to two values") {
  Eigen::ArrayXd m(6);
  m << 0, 1, 1, 0, 0, 1;
  const auto path = temp_file("mask.pgm");
  render_slice(m, 2, 3, 0, 1, path);
  const Image img = read_pnm(path);
  const std::set<std::uint8_t> values(img.pixels.begin(), img.pixels.end());
  CHECK(values == std::set<std::uint8_t>{0, 255});
}

TEST_CASE("overlay marks false positives in red only") {
  Eigen::ArrayXd pred(4), gt(4);
  pred << 1, 1, 0, 0;
  gt << 1, 0, 1, 0;
  const auto path = temp_file("overlay.ppm");
  render_overlay(pred, gt, 2, 2, path);
  const Image img = read_pnm(path);
  REQUIRE(img.channels == 3);
  for (int i = 0; i < 4; ++i) CHECK(img.pixels[3 * i] == (i == 1 ? 255 : 0));
  CHECK(img.pixels[1] == 255);
  CHECK(img.pixels[3 * 2 + 1] == 255);
  CHECK(img.pixels[2] == 255);
  CHECK(img.pixels[3 * 3 + 2] == 0);
}

TEST_CASE("size mismatches are rejected") {
  CHECK_THROWS_AS(render_slice(Eigen::ArrayXd::Zero(5), 2, 2, 0, 1, temp_file("bad.pgm")), StbError);
}
