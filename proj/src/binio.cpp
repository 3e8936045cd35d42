#include "binio.hpp"

#include <fstream>
#include <iterator>

#include <zlib.h>

namespace dkm::binio {

std::uint32_t crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks so multi-GB buffers stay correct
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const std::size_t n = std::min<std::size_t>(bytes.size() - pos, 1u << 30);
    crc = ::crc32(crc, bytes.data() + pos, static_cast<uInt>(n));
    pos += n;
  }
  return static_cast<std::uint32_t>(crc);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ContractError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ContractError("write failed: " + path.string());
}

void seal(Writer& w) { w.u32(crc32(w.buffer())); }

std::span<const std::uint8_t> unseal(std::span<const std::uint8_t> bytes, const std::string& what) {
  if (bytes.size() < 4) throw FormatError(what + ": truncated");
  const auto payload = bytes.first(bytes.size() - 4);
  Reader r(bytes.last(4), what);
  if (r.u32() != crc32(payload)) throw CorruptionError(what + ": CRC32 mismatch");
  return payload;
}

}  // namespace dkm::binio
