#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dkm/dataset.hpp"
#include "dkm/nn.hpp"

namespace dkm {

enum class IdxKind : std::uint32_t { Labels = 0x00000801, Images = 0x00000803 };

struct IdxTensor {
  IdxKind kind = IdxKind::Labels;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;  // row-major
};

/// Big-endian magic, dims, u8 payload. Throws FormatError on a magic other than
/// `expected` (the message carries the observed value), a short payload or trailing bytes.
IdxTensor parse_idx(std::span<const std::uint8_t> bytes, IdxKind expected);
/// Reads plain or gzip-compressed files.
IdxTensor load_idx(const std::filesystem::path& path, IdxKind expected);

/// `<dir>/<split>-images-idx3-ubyte[.gz]` and the matching labels file;
/// split is "train" or "t10k".
Dataset load_mnist(const std::filesystem::path& dir, const std::string& split);

/// DKMM file: "DKMM", u16 major, u16 minor, architecture block, float32 weights
/// and biases of every parametrised layer, trailing CRC32. Little-endian.
std::vector<std::uint8_t> encode_model(const ModelParams& model);
/// Checks magic, then version (major above ours: UnsupportedVersionError), then CRC.
ModelParams decode_model(std::span<const std::uint8_t> bytes);
void save_model(const std::filesystem::path& path, const ModelParams& model);
ModelParams load_model(const std::filesystem::path& path);

/// True when the file starts with the DKMC magic.
bool is_compressed_file(const std::filesystem::path& path);

}  // namespace dkm
