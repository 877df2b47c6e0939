#include "stbench/container.hpp"

#include "stbench/types.hpp"

#include <array>
#include <bit>
#include <cstring>

namespace stb {

static_assert(std::endian::native == std::endian::little, "STDC IO assumes a little-endian host");

namespace {

constexpr std::array<char, 4> kMagic = {'S', 'T', 'D', 'C'};
constexpr std::size_t kPreamble = 4 + 4 + 8;

std::uint64_t align_up(std::uint64_t n) {
  return (n + kSectionAlign - 1) / kSectionAlign * kSectionAlign;
}

}  // namespace

void write_container(const std::filesystem::path& path, nlohmann::json header,
                     std::span<const SectionView> sections) {
  // Offsets depend on the header length and vice versa; iterate to a fixed point.
  std::uint64_t start = 0;
  std::string text;
  for (int iter = 0; iter < 8; ++iter) {
    nlohmann::json table = nlohmann::json::array();
    std::uint64_t offset = start;
    for (const auto& s : sections) {
      table.push_back({{"name", s.name},
                       {"dtype", s.dtype},
                       {"offset", offset},
                       {"bytes", static_cast<std::uint64_t>(s.bytes.size())}});
      offset = align_up(offset + s.bytes.size());
    }
    header["sections"] = table;
    text = header.dump();
    const std::uint64_t next = align_up(kPreamble + text.size());
    if (next == start) break;
    start = next;
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw StbError("cannot open for writing: " + path.string());
  const std::uint32_t version = kContainerVersion;
  const std::uint64_t header_len = text.size();
  out.write(kMagic.data(), kMagic.size());
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&header_len), sizeof header_len);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));

  static const std::array<char, kSectionAlign> zeros{};
  std::uint64_t pos = kPreamble + text.size();
  for (const auto& s : sections) {
    const std::uint64_t aligned = align_up(pos);
    out.write(zeros.data(), static_cast<std::streamsize>(aligned - pos));
    out.write(reinterpret_cast<const char*>(s.bytes.data()),
              static_cast<std::streamsize>(s.bytes.size()));
    pos = aligned + s.bytes.size();
  }
  if (!out) throw StbError("write failed: " + path.string());
}

ContainerReader::ContainerReader(const std::filesystem::path& path)
    : path_(path), in_(path, std::ios::binary) {
  if (!in_) throw StbError("cannot open: " + path.string());
  in_.seekg(0, std::ios::end);
  file_size_ = static_cast<std::uint64_t>(in_.tellg());
  in_.seekg(0);

  std::array<char, 4> magic{};
  std::uint32_t version = 0;
  std::uint64_t header_len = 0;
  in_.read(magic.data(), magic.size());
  if (!in_ || magic != kMagic) throw StbError("not an STDC file: " + path.string());
  in_.read(reinterpret_cast<char*>(&version), sizeof version);
  in_.read(reinterpret_cast<char*>(&header_len), sizeof header_len);
  if (!in_) throw StbError("corrupt header: " + path.string());
  if (version != kContainerVersion)
    throw StbError("unsupported STDC version " + std::to_string(version));
  if (header_len > file_size_ - kPreamble) throw StbError("corrupt header: length exceeds file");

  std::string text(header_len, '\0');
  in_.read(text.data(), static_cast<std::streamsize>(header_len));
  try {
    header_ = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw StbError(std::string("corrupt header: ") + e.what());
  }
  if (!header_.contains("sections") || !header_["sections"].is_array())
    throw StbError("corrupt header: missing section table");
}

bool ContainerReader::has_section(const std::string& name) const {
  for (const auto& s : header_["sections"])
    if (s.value("name", "") == name) return true;
  return false;
}

const nlohmann::json& ContainerReader::entry(const std::string& name) const {
  for (const auto& s : header_["sections"])
    if (s.value("name", "") == name) return s;
  throw StbError("missing section '" + name + "' in " + path_.string());
}

std::size_t ContainerReader::section_bytes(const std::string& name) const {
  return entry(name).at("bytes").get<std::size_t>();
}

void ContainerReader::read_section(const std::string& name, const std::string& dtype,
                                   std::span<std::byte> out) {
  const auto& e = entry(name);
  if (e.at("dtype").get<std::string>() != dtype)
    throw StbError("section '" + name + "' has dtype " + e.at("dtype").get<std::string>());
  const auto offset = e.at("offset").get<std::uint64_t>();
  const auto bytes = e.at("bytes").get<std::uint64_t>();
  if (bytes != out.size())
    throw StbError("truncated payload: section '" + name + "' holds " + std::to_string(bytes) +
                   " bytes, header dims need " + std::to_string(out.size()));
  if (offset > file_size_ || bytes > file_size_ - offset)
    throw StbError("truncated payload: section '" + name + "' runs past end of file");
  in_.seekg(static_cast<std::streamoff>(offset));
  in_.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(bytes));
  if (!in_) throw StbError("truncated payload: short read in section '" + name + "'");
}

}  // namespace stb
