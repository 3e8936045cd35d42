#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dkm/dataset.hpp"
#include "dkm/matrix.hpp"

namespace dkm {

enum class LayerKind : std::uint8_t { Conv = 0, MaxPool = 1, Relu = 2, FullyConnected = 3, SoftmaxXent = 4 };
enum class Padding : std::uint8_t { Valid = 0, Same = 1 };

const char* to_string(LayerKind kind) noexcept;

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;
  std::size_t kernel = 0;  // conv: filter side s
  std::size_t in_c = 0;    // conv
  std::size_t out_c = 0;   // conv
  std::size_t stride = 1;  // conv, pool
  Padding padding = Padding::Valid;
  std::size_t window = 0;   // pool
  std::size_t in_dim = 0;   // fc
  std::size_t out_dim = 0;  // fc

  static LayerSpec conv(std::size_t s, std::size_t c, std::size_t m, std::size_t stride = 1,
                        Padding padding = Padding::Valid);
  static LayerSpec maxpool(std::size_t window, std::size_t stride);
  static LayerSpec relu();
  static LayerSpec fc(std::size_t in_dim, std::size_t out_dim);
  static LayerSpec softmax_xent();

  bool has_params() const noexcept {
    return kind == LayerKind::Conv || kind == LayerKind::FullyConnected;
  }
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct Shape3 {
  std::size_t c = 0, h = 0, w = 0;
  std::size_t size() const noexcept { return c * h * w; }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

/// A shape-checked layer chain ending in softmax cross-entropy.
class Architecture {
 public:
  Architecture() = default;
  /// Resolves spatial dims layer by layer; throws ContractError on any mismatch.
  Architecture(Shape3 input, std::vector<LayerSpec> layers);

  const Shape3& input() const noexcept { return input_; }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  /// Input shape of layer i; index layers().size() gives the logits shape.
  const Shape3& shape_at(std::size_t i) const { return shapes_.at(i); }
  std::size_t num_classes() const noexcept { return shapes_.empty() ? 0 : shapes_.back().size(); }
  std::vector<std::size_t> conv_layers() const;

  friend bool operator==(const Architecture& a, const Architecture& b) {
    return a.input_ == b.input_ && a.layers_ == b.layers_;
  }

 private:
  Shape3 input_;
  std::vector<LayerSpec> layers_;
  std::vector<Shape3> shapes_;
};

/// conv 5x5x1x6 -> relu -> pool 2 -> conv 5x5x6x16 -> relu -> pool 2 -> fc 120 -> relu
/// -> fc 84 -> relu -> fc classes. Valid convolutions, so 28x28 MNIST gives 256 fc inputs.
Architecture lenet5(Shape3 input = {1, 28, 28}, std::size_t num_classes = 10);

/// Weights and bias of one layer; empty for parameter-free layers.
/// Conv weights are OIHW (the Tensor4 layout), fc weights out x in.
struct LayerParams {
  std::vector<double> weights;
  std::vector<double> bias;
};

class ModelParams {
 public:
  ModelParams() = default;
  /// Zero-initialised parameters for `arch`.
  explicit ModelParams(Architecture arch);

  const Architecture& arch() const noexcept { return arch_; }
  const std::vector<LayerParams>& layers() const noexcept { return layers_; }
  LayerParams& layer(std::size_t i) { ++version_; return layers_.at(i); }
  const LayerParams& layer(std::size_t i) const { return layers_.at(i); }

  Tensor4 conv_tensor(std::size_t i) const;
  void set_conv_tensor(std::size_t i, const Tensor4& t);
  FilterDims conv_dims(std::size_t i) const;

  std::size_t parameter_count() const noexcept;
  /// Bumped on every mutable access; forward caches remember it.
  std::uint64_t version() const noexcept { return version_; }
  void touch() noexcept { ++version_; }

  /// Compares architecture and parameter values, not the version counter.
  friend bool operator==(const ModelParams& a, const ModelParams& b);

 private:
  Architecture arch_;
  std::vector<LayerParams> layers_;
  std::uint64_t version_ = 0;
};

/// He fan-in Gaussian weights, zero biases.
ModelParams init_model(const Architecture& arch, std::uint64_t seed);
/// Rounds every parameter to the nearest float32, the precision models are stored at.
void round_to_float32(ModelParams& model);

struct ForwardCache {
  std::size_t batch = 0;
  std::vector<std::vector<double>> inputs;       // input activation of every layer
  std::vector<std::vector<std::uint32_t>> argmax;  // pool layers
  std::vector<double> probs;                     // batch x classes
  std::uint64_t model_version = 0;
  bool consumed = false;
};

struct ForwardResult {
  Matrix logits;  // batch x classes
  ForwardCache cache;
};

/// `batch` holds `count` images laid out like Dataset::images. Throws
/// NumericalError when the logits are not finite.
ForwardResult forward(const ModelParams& model, std::span<const double> batch, std::size_t count);

struct Gradients {
  std::vector<LayerParams> layers;
  double loss = 0.0;  // mean cross-entropy of the batch
};

/// Gradients of the mean cross-entropy. Throws ContractError if the cache was
/// already used or the model changed since the forward pass.
Gradients backward(const ModelParams& model, ForwardCache& cache,
                   std::span<const std::uint8_t> labels);

/// Row-wise softmax of a batch x classes matrix.
Matrix softmax(const Matrix& logits);

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 64;
  std::size_t epochs = 60;
  std::uint64_t seed = 1;
  double lr_decay = 0.5;          // multiply the rate by this ...
  std::size_t lr_decay_every = 10;  // ... every this many epochs

  void validate() const;
  double rate_at(std::size_t epoch) const;
};

/// Extra gradient per layer added before the momentum update; empty = none.
using ExtraGradients = std::vector<std::vector<double>>;

/// Momentum buffers, one per parameter tensor.
struct MomentumState {
  std::vector<LayerParams> velocity;
};

/// v <- mu v + (g + extra); w <- w - lr v.
void sgd_step(ModelParams& model, const Gradients& grads, const ExtraGradients* extra,
              const TrainConfig& config, double learning_rate, MomentumState& state);

/// Regulariser plug-in for train().
class TrainHook {
 public:
  virtual ~TrainHook() = default;
  /// Called before the first batch of every epoch.
  virtual void on_epoch_begin(std::size_t epoch, ModelParams& model) = 0;
  /// Fills per-layer extra gradients for the current parameters.
  virtual void extra_gradients(const ModelParams& model, ExtraGradients& out) = 0;
  /// Per-conv-layer penalty values for the epoch log.
  virtual std::vector<double> penalties(const ModelParams& model) const = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;      // mean task loss over the epoch
  std::vector<double> penalties;
  double accuracy = 0.0;  // training accuracy accumulated during the epoch
};

/// "epoch=3 loss=0.123456 accuracy=0.9812 penalty=[1.2e-05,3.4e-05]"
std::string format_epoch_record(const EpochRecord& rec);

struct TrainResult {
  ModelParams model;
  std::vector<EpochRecord> log;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch momentum SGD with a per-epoch seeded shuffle. Deterministic given
/// config.seed. Throws TrainingDivergedError when the loss stops being finite.
TrainResult train(ModelParams model, const Dataset& data, const TrainConfig& config,
                  TrainHook* hook = nullptr, const EpochCallback& on_epoch = {});

/// Top-1 accuracy in [0, 1]; throws ContractError on an empty dataset.
double evaluate(const ModelParams& model, const Dataset& data);

}  // namespace dkm
