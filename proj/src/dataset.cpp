#include "dkm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dkm/error.hpp"

namespace dkm {

void Dataset::validate() const {
  require(images.size() == labels.size() * image_size(), "Dataset: image and label counts differ");
  for (auto l : labels) require(l < num_classes, "Dataset: label out of range");
}

Dataset Dataset::head(std::size_t count) const {
  Dataset out = *this;
  count = std::min(count, size());
  out.labels.resize(count);
  out.images.resize(count * image_size());
  return out;
}

Dataset synthetic_patterns(std::size_t count, std::uint64_t seed, const std::string& split) {
  constexpr std::size_t kSide = 16;
  Dataset d;
  d.channels = 1;
  d.height = kSide;
  d.width = kSide;
  d.num_classes = 4;
  d.split = split;
  d.images.assign(count * kSide * kSide, 0.0);
  d.labels.resize(count);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.15);
  std::uniform_int_distribution<int> shift(0, 3);
  std::uniform_int_distribution<int> jitter(-2, 2);
  for (std::size_t i = 0; i < count; ++i) {
    const int label = static_cast<int>(i % 4);
    d.labels[i] = static_cast<std::uint8_t>(label);
    const int sh = shift(rng);
    const int cy = 7 + jitter(rng), cx = 7 + jitter(rng);
    double* px = d.images.data() + i * kSide * kSide;
    for (int y = 0; y < static_cast<int>(kSide); ++y)
      for (int x = 0; x < static_cast<int>(kSide); ++x) {
        bool on = false;
        switch (label) {
          case 0: on = (y + sh) % 4 < 2; break;
          case 1: on = (x + sh) % 4 < 2; break;
          case 2: on = (x + y + sh) % 4 < 2; break;
          default: on = (y - cy) * (y - cy) + (x - cx) * (x - cx) <= 16; break;
        }
        px[y * kSide + x] = std::clamp((on ? 0.9 : 0.1) + noise(rng), 0.0, 1.0);
      }
  }
  return d;
}

}  // namespace dkm
