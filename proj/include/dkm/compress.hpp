#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dkm/cluster.hpp"
#include "dkm/nn.hpp"
#include "dkm/reshape.hpp"

namespace dkm {

struct ShareConfig {
  double cluster_rate = 0.1;               // K / N for every conv layer but the first
  std::optional<double> first_layer_rate;  // default: min(1, 4 * cluster_rate)
  std::vector<double> sparsity_p;          // empty, or one zero-cluster fraction per conv layer
  std::vector<std::size_t> per_layer_k;    // empty, or an explicit K per conv layer (overrides the rates)
  unsigned weight_bits = 32;               // bits per stored center value in the CR accounting
  KMeansOptions kmeans;                    // layer i is seeded with kmeans.seed + i

  double first_rate() const;
  /// Throws ContractError on rates outside (0, 1] or per-layer lists of the wrong length.
  void validate(std::size_t conv_layer_count) const;
};

/// K per conv layer, in conv-layer order: max(1, round(rate * N)) clamped to N,
/// or per_layer_k when given (each entry must lie in [1, N]).
std::vector<std::size_t> allocate_k(const Architecture& arch, const ShareConfig& config);

/// Bits per stored assignment index: ceil(log2 K), 0 for K = 1.
unsigned index_bits(std::size_t k);

struct CompressedLayer {
  std::size_t layer_index = 0;  // position in the architecture
  FilterDims dims;
  Codebook codebook;            // centers rounded to float32
};

struct CompressedModel {
  std::uint64_t source_hash = 0;
  ShareConfig config;
  /// Source model with every conv weight zeroed; biases and fc layers verbatim.
  ModelParams passthrough;
  std::vector<CompressedLayer> layers;
};

/// FNV-1a over the float32 image of every parameter.
std::uint64_t model_hash(const ModelParams& model);

/// Row-wise k-means parameter sharing of every conv layer. Clustering errors are
/// rethrown as ContractError naming the layer.
CompressedModel share(const ModelParams& model, const ShareConfig& config);

/// Quantized conv layers spliced into the passthrough parameters.
ModelParams reconstruct(const CompressedModel& cm);

/// One conv layer's contribution to the compression ratio.
struct LayerFootprint {
  std::size_t s = 0;  // column length
  std::size_t n = 0;  // columns
  std::size_t k = 0;  // clusters
};

/// sum N*s*bits / sum (K*s*bits + N*ceil(log2 K)). Non-conv layers are excluded.
double compression_ratio(std::span<const LayerFootprint> layers, unsigned weight_bits);
double compression_ratio(const ModelParams& model, const CompressedModel& cm);

/// Largest K whose single-layer compression ratio is at least `target`.
std::size_t k_for_layer_ratio(std::size_t s, std::size_t n, unsigned weight_bits, double target);

/// DKMC file: "DKMC", u16 version, u16 conv layer count, per layer dims (4 x u32),
/// K (u32), K*s float32 centers, ceil(N*bits/8) bytes of LSB-first packed indexes;
/// then a u32-length-prefixed passthrough section (provenance and non-conv
/// parameters); trailing CRC32 of everything before it. All little-endian.
std::vector<std::uint8_t> encode_compressed(const CompressedModel& cm);
CompressedModel decode_compressed(std::span<const std::uint8_t> bytes);
void save_compressed(const std::filesystem::path& path, const CompressedModel& cm);
CompressedModel load_compressed(const std::filesystem::path& path);

}  // namespace dkm
