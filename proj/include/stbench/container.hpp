#pragma once

#include <nlohmann/json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace stb {

/// On-disk layout shared by datacubes and checkpoints:
///   "STDC" | u32 version | u64 header length | JSON header | sections
/// Integers are little-endian. Every section starts on a 64-byte boundary and
/// is listed in header["sections"] with its absolute offset and byte count.
inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::size_t kSectionAlign = 64;

struct SectionView {
  std::string name;
  std::string dtype;  // "f32", "f64" or "u8"
  std::span<const std::byte> bytes;
};

void write_container(const std::filesystem::path& path, nlohmann::json header,
                     std::span<const SectionView> sections);

class ContainerReader {
 public:
  explicit ContainerReader(const std::filesystem::path& path);

  const nlohmann::json& header() const { return header_; }
  bool has_section(const std::string& name) const;
  std::size_t section_bytes(const std::string& name) const;
  /// Reads a whole section into `out`; sizes and dtype must match exactly.
  void read_section(const std::string& name, const std::string& dtype, std::span<std::byte> out);

 private:
  const nlohmann::json& entry(const std::string& name) const;

  std::filesystem::path path_;
  std::ifstream in_;
  std::uint64_t file_size_ = 0;
  nlohmann::json header_;
};

}  // namespace stb
