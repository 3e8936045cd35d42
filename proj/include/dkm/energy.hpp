#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dkm/compress.hpp"
#include "dkm/nn.hpp"

namespace dkm {

enum class EnergyLayerKind { Conv, FullyConnected };

/// Shape and precision of one layer for the cost model.
struct EnergyLayer {
  EnergyLayerKind kind = EnergyLayerKind::Conv;
  std::string name;
  // conv
  std::size_t s = 0, c = 0, m = 0;
  std::size_t h_in = 0, w_in = 0;
  std::size_t stride = 1;
  Padding padding = Padding::Valid;
  // fc
  std::size_t in_dim = 0, out_dim = 0;

  unsigned bw = 16, bx = 16;
  std::optional<std::size_t> shared_k;  // conv only: s*K stored weights
  double pruned = 0.0;                  // conv only: fraction of filters removed

  std::size_t h_out() const;
  std::size_t w_out() const;
  /// Filters left after pruning; m * (1 - pruned) must be a whole number.
  std::size_t m_eff() const;
};

struct NetworkSpec {
  std::vector<EnergyLayer> layers;
  /// Throws ContractError on zero dims, precisions outside [1, 64], a fractional
  /// pruned filter count, or sharing/pruning on fc layers.
  void validate() const;
};

/// D*Bw*Bx + (D-1)*(Bw + Bx + ceil(log2 D) - 1) one-bit full adders.
std::uint64_t dot_product_fa(std::uint64_t d, unsigned bw, unsigned bx);

struct LayerEnergy {
  std::string name;
  std::uint64_t comp_fa = 0;
  std::uint64_t weight_rep = 0;  // bit * uses
  std::uint64_t act_rep = 0;     // bit * uses
  double comp_mac = 0.0;         // comp_fa / dot_product_fa(1, Bw, Bx)
  double rep_mac = 0.0;          // (weight_rep + act_rep) / (Bw + Bx)
  double total_mac = 0.0;        // comp_mac + kRepFactor * rep_mac
};

inline constexpr double kRepFactor = 6.0;

struct EnergyReport {
  std::vector<LayerEnergy> layers;
  std::uint64_t comp_cost_fa = 0;
  std::uint64_t weight_rep_cost = 0;
  std::uint64_t act_rep_cost = 0;
  double comp_mac = 0.0;
  double rep_mac = 0.0;
  double total_energy_mac = 0.0;
};

LayerEnergy layer_energy(const EnergyLayer& layer);
std::uint64_t comp_cost(const NetworkSpec& spec);
std::uint64_t weight_rep_cost(const NetworkSpec& spec);
std::uint64_t act_rep_cost(const NetworkSpec& spec);
EnergyReport total_energy(const NetworkSpec& spec);

/// Coefficient of determination of the least-squares line of ys on xs.
/// Throws ContractError on unequal or short series, UndefinedFitError on constant xs.
double r_squared(std::span<const double> xs, std::span<const double> ys);

/// One layer per line, '#' starts a comment:
///   conv name=conv1 s=5 c=1 m=6 h=28 w=28 stride=1 pad=valid bw=16 bx=16 [k=25] [pruned=0.5]
///   fc name=fc1 in=256 out=120 bw=16 bx=16
NetworkSpec parse_netspec(const std::string& text);
NetworkSpec load_netspec(const std::filesystem::path& path);
std::string format_netspec(const NetworkSpec& spec);

/// Conv and fc layers of `arch` with uniform precisions.
NetworkSpec netspec_from_arch(const Architecture& arch, unsigned bw = 16, unsigned bx = 16);
/// Same, with each conv layer marked shared at its stored K.
NetworkSpec netspec_from_compressed(const CompressedModel& cm, unsigned bw = 16, unsigned bx = 16);

/// Fixed-column text with a commented header stating the counting conventions.
std::string format_energy_report(const EnergyReport& report);

}  // namespace dkm
