#include "dkm/spectral_reg.hpp"

#include <string>

#include "dkm/cluster.hpp"
#include "dkm/error.hpp"
#include "dkm/linalg.hpp"
#include "dkm/reshape.hpp"

namespace dkm {

OrthonormalFactor::OrthonormalFactor(Matrix columns, std::size_t source_epoch)
    : columns_(std::move(columns)), source_epoch_(source_epoch) {
  require(columns_.cols() >= 1, "OrthonormalFactor: needs at least one column");
  require(columns_.cols() <= columns_.rows(), "OrthonormalFactor: more columns than rows");
  require(orthonormality_error(columns_) <= 1e-8, "OrthonormalFactor: columns are not orthonormal");
}

void RegConfig::validate() const {
  require(lambda == 0.0 || (lambda >= 1e-6 && lambda <= 1e-1),
          "RegConfig: lambda must be 0 or lie in [1e-6, 1e-1]");
  require(refresh_every_epochs >= 1, "RegConfig: refresh_every_epochs must be >= 1");
  for (const auto& [layer, k] : per_layer_k)
    require(k >= 1, "RegConfig: K must be >= 1 for layer " + std::to_string(layer));
  for (const auto& [layer, p] : sparsity_p)
    require(p >= 0.0 && p < 1.0, "RegConfig: sparsity p must lie in [0, 1) for layer " + std::to_string(layer));
}

double penalty(const Matrix& w, const OrthonormalFactor& f) {
  require(f.columns().rows() == w.cols(), "penalty: F has " + std::to_string(f.columns().rows()) +
                                              " rows, W has " + std::to_string(w.cols()) + " columns");
  return frobenius_sq(w) - frobenius_sq(matmul(w, f.columns()));
}

Matrix reg_gradient(const Matrix& w, const OrthonormalFactor& f, double lambda) {
  require(f.columns().rows() == w.cols(), "reg_gradient: F does not match W");
  const Matrix wf = matmul(w, f.columns());              // s x r
  const Matrix proj = matmul(wf, f.columns().transpose());  // s x N
  Matrix out(w.rows(), w.cols());
  auto o = out.data();
  const auto a = w.data(), b = proj.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = lambda * (a[i] - b[i]);
  return out;
}

OrthonormalFactor update_f(const Matrix& w, std::size_t k, std::size_t epoch) {
  auto svd = truncated_svd(w, k);
  if (svd.right_vectors.cols() == 0) {
    Matrix e1(w.cols(), 1);
    e1(0, 0) = 1.0;
    return OrthonormalFactor(std::move(e1), epoch);
  }
  return OrthonormalFactor(std::move(svd.right_vectors), epoch);
}

SpectralRegularizer::SpectralRegularizer(RegConfig config, const Architecture& arch)
    : config_(std::move(config)), conv_layers_(arch.conv_layers()) {
  config_.validate();
  for (auto layer : conv_layers_)
    if (!config_.per_layer_k.contains(layer))
      throw ConfigError("regularizer: no cluster count K for conv layer " + std::to_string(layer));
  factors_.resize(conv_layers_.size());
}

const OrthonormalFactor& SpectralRegularizer::factor(std::size_t conv_index) const {
  require(conv_index < factors_.size() && factors_[conv_index], "regularizer: F not computed yet");
  return *factors_[conv_index];
}

void SpectralRegularizer::on_epoch_begin(std::size_t epoch, ModelParams& model) {
  if (epoch % config_.refresh_every_epochs != 0) return;
  for (const auto& [layer, p] : config_.sparsity_p) {
    if (p <= 0.0 || !model.arch().layers().at(layer).has_params()) continue;
    Matrix w = reshape_rows(model.conv_tensor(layer));
    for (auto j : smallest_norm_columns(w, zero_cluster_size(w.cols(), p)))
      for (std::size_t r = 0; r < w.rows(); ++r) w(r, j) = 0.0;
    model.set_conv_tensor(layer, unreshape_rows(w, model.conv_dims(layer)));
  }
  const ModelParams& snapshot = model;
  // Layers are independent; each refresh is an s x s problem.
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < conv_layers_.size(); ++i) {
    const std::size_t layer = conv_layers_[i];
    factors_[i] = std::make_unique<OrthonormalFactor>(
        update_f(reshape_rows(snapshot.conv_tensor(layer)), config_.per_layer_k.at(layer), epoch));
  }
}

void SpectralRegularizer::extra_gradients(const ModelParams& model, ExtraGradients& out) {
  require(out.size() == model.layers().size(), "regularizer: extra gradient slots do not match model");
  for (std::size_t i = 0; i < conv_layers_.size(); ++i) {
    const std::size_t layer = conv_layers_[i];
    const FilterDims dims = model.conv_dims(layer);
    const Matrix g = reg_gradient(reshape_rows(model.conv_tensor(layer)), factor(i), config_.lambda);
    const Tensor4 t = unreshape_rows(g, dims);
    out[layer].assign(t.data().begin(), t.data().end());
  }
}

std::vector<double> SpectralRegularizer::penalties(const ModelParams& model) const {
  std::vector<double> out;
  out.reserve(conv_layers_.size());
  for (std::size_t i = 0; i < conv_layers_.size(); ++i)
    out.push_back(penalty(reshape_rows(model.conv_tensor(conv_layers_[i])), factor(i)));
  return out;
}

std::unique_ptr<SpectralRegularizer> make_hook(const RegConfig& config, const Architecture& arch) {
  return std::make_unique<SpectralRegularizer>(config, arch);
}

}  // namespace dkm
