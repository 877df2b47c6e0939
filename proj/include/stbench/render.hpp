#pragma once

#include "stbench/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace stb {

/// Linear map of [lo, hi] onto 0..255 (rounded, clamped). A degenerate
/// range renders as uniform 128.
std::vector<std::uint8_t> to_gray(const Eigen::Ref<const Eigen::ArrayXd>& field, double lo, double hi);

/// Interleaved RGB: red = false positive, green = ground truth, blue = prediction.
std::vector<std::uint8_t> to_overlay(const Eigen::Ref<const Eigen::ArrayXd>& pred,
                                     const Eigen::Ref<const Eigen::ArrayXd>& gt);

void write_pgm(const std::filesystem::path& path, Index width, Index height, const std::vector<std::uint8_t>& gray);
void write_ppm(const std::filesystem::path& path, Index width, Index height, const std::vector<std::uint8_t>& rgb);

/// Grayscale P5 image of a (height x width) row-major field.
void render_slice(const Eigen::Ref<const Eigen::ArrayXd>& field, Index height, Index width, double lo, double hi,
                  const std::filesystem::path& path);

void render_overlay(const Eigen::Ref<const Eigen::ArrayXd>& pred, const Eigen::Ref<const Eigen::ArrayXd>& gt,
                    Index height, Index width, const std::filesystem::path& path);

struct Image {
  Index width = 0;
  Index height = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;
};

/// Reads binary P5 or P6 files written above.
Image read_pnm(const std::filesystem::path& path);

}  // namespace stb
