#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <vector>

#include "dkm/matrix.hpp"
#include "dkm/nn.hpp"

namespace dkm {

/// Relaxed cluster indicator F: N x r with orthonormal columns.
class OrthonormalFactor {
 public:
  /// Throws ContractError unless r >= 1 and F^T F = I within 1e-8.
  OrthonormalFactor(Matrix columns, std::size_t source_epoch = 0);

  const Matrix& columns() const noexcept { return columns_; }
  std::size_t width() const noexcept { return columns_.cols(); }
  std::size_t source_epoch() const noexcept { return source_epoch_; }

 private:
  Matrix columns_;
  std::size_t source_epoch_;
};

struct RegConfig {
  double lambda = 1e-4;
  std::size_t refresh_every_epochs = 5;
  std::map<std::size_t, std::size_t> per_layer_k;  // conv layer index -> K
  /// Optional zero-cluster fraction per conv layer, applied at every refresh.
  std::map<std::size_t, double> sparsity_p;

  /// lambda must be 0 (disabled) or within [1e-6, 1e-1]; refresh >= 1.
  void validate() const;
};

/// Tr(W^T W) - Tr(F^T W^T W F) = ||W||_F^2 - ||W F||_F^2. O(s r N).
double penalty(const Matrix& w, const OrthonormalFactor& f);

/// lambda * (W - (W F) F^T): the gradient of (lambda/2) * penalty with F fixed.
Matrix reg_gradient(const Matrix& w, const OrthonormalFactor& f, double lambda);

/// Closed-form maximiser of Tr(F^T W^T W F): the top min(k, rank) right singular
/// vectors of W. A zero W has no such vectors, so e_1 is returned instead.
OrthonormalFactor update_f(const Matrix& w, std::size_t k, std::size_t epoch = 0);

/// Training hook adding the relaxed k-means penalty to every conv layer. F is
/// refreshed at epochs 0, r, 2r, ... and held fixed in between.
class SpectralRegularizer final : public TrainHook {
 public:
  SpectralRegularizer(RegConfig config, const Architecture& arch);

  void on_epoch_begin(std::size_t epoch, ModelParams& model) override;
  void extra_gradients(const ModelParams& model, ExtraGradients& out) override;
  std::vector<double> penalties(const ModelParams& model) const override;

  const RegConfig& config() const noexcept { return config_; }
  const std::vector<std::size_t>& conv_layers() const noexcept { return conv_layers_; }
  /// F of the i-th conv layer; throws before the first refresh.
  const OrthonormalFactor& factor(std::size_t conv_index) const;

 private:
  RegConfig config_;
  std::vector<std::size_t> conv_layers_;
  std::vector<std::unique_ptr<OrthonormalFactor>> factors_;
};

/// Throws ConfigError when a conv layer has no K in config.per_layer_k.
std::unique_ptr<SpectralRegularizer> make_hook(const RegConfig& config, const Architecture& arch);

}  // namespace dkm
