#include "stbench/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

namespace stb {

std::vector<std::uint8_t> to_gray(const Eigen::Ref<const Eigen::ArrayXd>& field, double lo, double hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw StbError("render: range must be finite");
  std::vector<std::uint8_t> out(static_cast<std::size_t>(field.size()), 128);
  if (hi <= lo) return out;
  for (Index i = 0; i < field.size(); ++i) {
    const double u = std::clamp((field[i] - lo) / (hi - lo), 0.0, 1.0);
    out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(std::lround(u * 255.0));
  }
  return out;
}

std::vector<std::uint8_t> to_overlay(const Eigen::Ref<const Eigen::ArrayXd>& pred,
                                     const Eigen::Ref<const Eigen::ArrayXd>& gt) {
  if (pred.size() != gt.size()) throw StbError("render: overlay shapes differ");
  std::vector<std::uint8_t> out(static_cast<std::size_t>(3 * pred.size()), 0);
  for (Index i = 0; i < pred.size(); ++i) {
    const bool p = pred[i] > 0, g = gt[i] > 0;
    out[static_cast<std::size_t>(3 * i)] = p && !g ? 255 : 0;
    out[static_cast<std::size_t>(3 * i + 1)] = g ? 255 : 0;
    out[static_cast<std::size_t>(3 * i + 2)] = p ? 255 : 0;
  }
  return out;
}

namespace {

void write_pnm(const std::filesystem::path& path, const char* magic, Index width, Index height, int channels,
               const std::vector<std::uint8_t>& bytes) {
  if (static_cast<Index>(bytes.size()) != width * height * channels) throw StbError("render: pixel count mismatch");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StbError("cannot write " + path.string());
  out << magic << "\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw StbError("write failed: " + path.string());
}

}  // namespace

void write_pgm(const std::filesystem::path& path, Index width, Index height, const std::vector<std::uint8_t>& gray) {
  write_pnm(path, "P5", width, height, 1, gray);
}

void write_ppm(const std::filesystem::path& path, Index width, Index height, const std::vector<std::uint8_t>& rgb) {
  write_pnm(path, "P6", width, height, 3, rgb);
}

void render_slice(const Eigen::Ref<const Eigen::ArrayXd>& field, Index height, Index width, double lo, double hi,
                  const std::filesystem::path& path) {
  if (field.size() != height * width) throw StbError("render: field size does not match the image");
  write_pgm(path, width, height, to_gray(field, lo, hi));
}

void render_overlay(const Eigen::Ref<const Eigen::ArrayXd>& pred, const Eigen::Ref<const Eigen::ArrayXd>& gt,
                    Index height, Index width, const std::filesystem::path& path) {
  if (pred.size() != height * width) throw StbError("render: field size does not match the image");
  write_ppm(path, width, height, to_overlay(pred, gt));
}

Image read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StbError("cannot open " + path.string());
  std::string magic;
  int maxval = 0;
  Image img;
  in >> magic >> img.width >> img.height >> maxval;
  if ((magic != "P5" && magic != "P6") || maxval != 255 || img.width <= 0 || img.height <= 0)
    throw StbError(path.string() + ": unsupported image");
  in.get();
  img.channels = magic == "P6" ? 3 : 1;
  img.pixels.resize(static_cast<std::size_t>(img.width * img.height * img.channels));
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!in) throw StbError(path.string() + ": truncated image");
  return img;
}

}  // namespace stb
