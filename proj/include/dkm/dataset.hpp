#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dkm {

/// Images scaled to [0, 1], stored sample-major as channels x height x width.
struct Dataset {
  std::size_t channels = 1;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t num_classes = 0;
  std::string split;
  std::vector<double> images;
  std::vector<std::uint8_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t image_size() const noexcept { return channels * height * width; }
  std::span<const double> image(std::size_t i) const {
    return std::span<const double>(images).subspan(i * image_size(), image_size());
  }
  /// Throws ContractError when lengths or labels are inconsistent.
  void validate() const;
  /// First `count` samples (all of them when count >= size()).
  Dataset head(std::size_t count) const;
};

/// Deterministic 4-class 16x16 pattern set (horizontal bars, vertical bars,
/// diagonal stripes, centered blob) with seeded shifts and pixel noise.
Dataset synthetic_patterns(std::size_t count, std::uint64_t seed, const std::string& split);

}  // namespace dkm
