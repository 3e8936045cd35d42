#include "dkm/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <string>

#include "dkm/error.hpp"
#include "dkm/kernels.hpp"

namespace dkm {

const char* to_string(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::Relu: return "relu";
    case LayerKind::FullyConnected: return "fc";
    case LayerKind::SoftmaxXent: return "softmax-xent";
  }
  return "?";
}

LayerSpec LayerSpec::conv(std::size_t s, std::size_t c, std::size_t m, std::size_t stride,
                          Padding padding) {
  LayerSpec l;
  l.kind = LayerKind::Conv;
  l.kernel = s;
  l.in_c = c;
  l.out_c = m;
  l.stride = stride;
  l.padding = padding;
  return l;
}

LayerSpec LayerSpec::maxpool(std::size_t window, std::size_t stride) {
  LayerSpec l;
  l.kind = LayerKind::MaxPool;
  l.window = window;
  l.stride = stride;
  return l;
}

LayerSpec LayerSpec::relu() { return LayerSpec{}; }

LayerSpec LayerSpec::fc(std::size_t in_dim, std::size_t out_dim) {
  LayerSpec l;
  l.kind = LayerKind::FullyConnected;
  l.in_dim = in_dim;
  l.out_dim = out_dim;
  return l;
}

LayerSpec LayerSpec::softmax_xent() {
  LayerSpec l;
  l.kind = LayerKind::SoftmaxXent;
  return l;
}

namespace {

std::size_t conv_pad(const LayerSpec& l) {
  return l.padding == Padding::Same ? (l.kernel - 1) / 2 : 0;
}

kernels::ConvShape conv_shape(const LayerSpec& l, const Shape3& in, std::size_t batch) {
  kernels::ConvShape s;
  s.batch = batch;
  s.in_c = in.c;
  s.in_h = in.h;
  s.in_w = in.w;
  s.out_c = l.out_c;
  s.kernel = l.kernel;
  s.stride = l.stride;
  s.pad = conv_pad(l);
  return s;
}

std::string layer_tag(std::size_t i, const LayerSpec& l) {
  return "layer " + std::to_string(i) + " (" + to_string(l.kind) + ")";
}

}  // namespace

Architecture::Architecture(Shape3 input, std::vector<LayerSpec> layers)
    : input_(input), layers_(std::move(layers)) {
  require(input_.size() > 0, "Architecture: empty input shape");
  require(!layers_.empty() && layers_.back().kind == LayerKind::SoftmaxXent,
          "Architecture: the chain must end in softmax-xent");
  shapes_.push_back(input_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const Shape3 in = shapes_.back();
    Shape3 out = in;
    const std::string tag = layer_tag(i, l);
    switch (l.kind) {
      case LayerKind::Conv: {
        require(l.kernel >= 1 && l.stride >= 1 && l.out_c >= 1, tag + ": bad conv parameters");
        require(l.in_c == in.c, tag + ": expects " + std::to_string(l.in_c) + " input channels, got " +
                                    std::to_string(in.c));
        if (l.padding == Padding::Same) require(l.kernel % 2 == 1, tag + ": same padding needs an odd kernel");
        const auto s = conv_shape(l, in, 1);
        require(in.h + 2 * s.pad >= l.kernel && in.w + 2 * s.pad >= l.kernel, tag + ": input smaller than filter");
        out = {l.out_c, s.out_h(), s.out_w()};
        break;
      }
      case LayerKind::MaxPool:
        require(l.window >= 1 && l.stride >= 1, tag + ": bad pool parameters");
        require(in.h >= l.window && in.w >= l.window, tag + ": input smaller than window");
        out = {in.c, (in.h - l.window) / l.stride + 1, (in.w - l.window) / l.stride + 1};
        break;
      case LayerKind::Relu:
        break;
      case LayerKind::FullyConnected:
        require(l.in_dim == in.size(), tag + ": expects " + std::to_string(l.in_dim) + " inputs, got " +
                                           std::to_string(in.size()));
        require(l.out_dim >= 1, tag + ": zero outputs");
        out = {l.out_dim, 1, 1};
        break;
      case LayerKind::SoftmaxXent:
        require(i + 1 == layers_.size(), tag + ": softmax-xent must be the last layer");
        break;
    }
    shapes_.push_back(out);
  }
}

std::vector<std::size_t> Architecture::conv_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i].kind == LayerKind::Conv) out.push_back(i);
  return out;
}

Architecture lenet5(Shape3 input, std::size_t num_classes) {
  // Probe the flattened size after the conv/pool stack.
  const Architecture trunk(input, {LayerSpec::conv(5, input.c, 6), LayerSpec::relu(),
                                   LayerSpec::maxpool(2, 2), LayerSpec::conv(5, 6, 16),
                                   LayerSpec::relu(), LayerSpec::maxpool(2, 2),
                                   LayerSpec::softmax_xent()});
  const std::size_t flat = trunk.shape_at(6).size();
  return Architecture(input, {LayerSpec::conv(5, input.c, 6), LayerSpec::relu(), LayerSpec::maxpool(2, 2),
                              LayerSpec::conv(5, 6, 16), LayerSpec::relu(), LayerSpec::maxpool(2, 2),
                              LayerSpec::fc(flat, 120), LayerSpec::relu(), LayerSpec::fc(120, 84),
                              LayerSpec::relu(), LayerSpec::fc(84, num_classes),
                              LayerSpec::softmax_xent()});
}

ModelParams::ModelParams(Architecture arch) : arch_(std::move(arch)) {
  layers_.resize(arch_.layers().size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = arch_.layers()[i];
    if (l.kind == LayerKind::Conv) {
      layers_[i].weights.assign(l.out_c * l.in_c * l.kernel * l.kernel, 0.0);
      layers_[i].bias.assign(l.out_c, 0.0);
    } else if (l.kind == LayerKind::FullyConnected) {
      layers_[i].weights.assign(l.out_dim * l.in_dim, 0.0);
      layers_[i].bias.assign(l.out_dim, 0.0);
    }
  }
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  if (!(a.arch_ == b.arch_) || a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t i = 0; i < a.layers_.size(); ++i)
    if (a.layers_[i].weights != b.layers_[i].weights || a.layers_[i].bias != b.layers_[i].bias)
      return false;
  return true;
}

FilterDims ModelParams::conv_dims(std::size_t i) const {
  const auto& l = arch_.layers().at(i);
  require(l.kind == LayerKind::Conv, "layer " + std::to_string(i) + " is not a conv layer");
  return {l.kernel, l.kernel, l.in_c, l.out_c};
}

Tensor4 ModelParams::conv_tensor(std::size_t i) const {
  return Tensor4(conv_dims(i), layers_[i].weights);
}

void ModelParams::set_conv_tensor(std::size_t i, const Tensor4& t) {
  require(t.dims() == conv_dims(i), "set_conv_tensor: dims do not match layer " + std::to_string(i));
  layers_[i].weights.assign(t.data().begin(), t.data().end());
  ++version_;
}

std::size_t ModelParams::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weights.size() + l.bias.size();
  return n;
}

ModelParams init_model(const Architecture& arch, std::uint64_t seed) {
  ModelParams model(arch);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < arch.layers().size(); ++i) {
    const auto& l = arch.layers()[i];
    if (!l.has_params()) continue;
    const double fan_in = l.kind == LayerKind::Conv ? static_cast<double>(l.in_c * l.kernel * l.kernel)
                                                    : static_cast<double>(l.in_dim);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (auto& w : model.layer(i).weights) w = dist(rng);
  }
  return model;
}

void round_to_float32(ModelParams& model) {
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    auto& l = model.layer(i);
    for (auto& w : l.weights) w = static_cast<float>(w);
    for (auto& b : l.bias) b = static_cast<float>(b);
  }
}

Matrix softmax(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t b = 0; b < logits.rows(); ++b) {
    const auto row = logits.row(b);
    const double mx = *std::max_element(row.begin(), row.end());
    double total = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) {
      out(b, j) = std::exp(row[j] - mx);
      total += out(b, j);
    }
    for (std::size_t j = 0; j < row.size(); ++j) out(b, j) /= total;
  }
  return out;
}

ForwardResult forward(const ModelParams& model, std::span<const double> batch, std::size_t count) {
  const auto& arch = model.arch();
  require(count >= 1, "forward: empty batch");
  require(batch.size() == count * arch.input().size(),
          "forward: batch holds " + std::to_string(batch.size()) + " values, expected " +
              std::to_string(count * arch.input().size()));

  ForwardResult res;
  auto& cache = res.cache;
  const std::size_t L = arch.layers().size();
  cache.batch = count;
  cache.inputs.resize(L);
  cache.argmax.resize(L);
  cache.model_version = model.version();

  std::vector<double> cur(batch.begin(), batch.end());
  for (std::size_t i = 0; i < L; ++i) {
    const auto& l = arch.layers()[i];
    const Shape3& in = arch.shape_at(i);
    const Shape3& out = arch.shape_at(i + 1);
    std::vector<double> next;
    switch (l.kind) {
      case LayerKind::Conv: {
        const auto s = conv_shape(l, in, count);
        next.assign(s.output_size(), 0.0);
        kernels::parallel::conv2d_forward(s, cur, model.layer(i).weights, model.layer(i).bias, next);
        break;
      }
      case LayerKind::Relu:
        next = cur;
        for (auto& v : next) v = v > 0.0 ? v : 0.0;
        break;
      case LayerKind::MaxPool: {
        next.assign(count * out.size(), 0.0);
        auto& arg = cache.argmax[i];
        arg.assign(next.size(), 0);
        for (std::size_t b = 0; b < count; ++b)
          for (std::size_t c = 0; c < in.c; ++c)
            for (std::size_t oy = 0; oy < out.h; ++oy)
              for (std::size_t ox = 0; ox < out.w; ++ox) {
                const std::size_t base = (b * in.c + c) * in.h * in.w;
                std::size_t best = base + (oy * l.stride) * in.w + ox * l.stride;
                for (std::size_t wy = 0; wy < l.window; ++wy)
                  for (std::size_t wx = 0; wx < l.window; ++wx) {
                    const std::size_t idx = base + (oy * l.stride + wy) * in.w + ox * l.stride + wx;
                    if (cur[idx] > cur[best]) best = idx;
                  }
                const std::size_t o = ((b * out.c + c) * out.h + oy) * out.w + ox;
                next[o] = cur[best];
                arg[o] = static_cast<std::uint32_t>(best);
              }
        break;
      }
      case LayerKind::FullyConnected: {
        next.assign(count * l.out_dim, 0.0);
        const auto& p = model.layer(i);
        for (std::size_t b = 0; b < count; ++b)
          std::copy(p.bias.begin(), p.bias.end(), next.begin() + b * l.out_dim);
        kernels::parallel::gemm_nt(cur, p.weights, next, count, l.in_dim, l.out_dim);
        break;
      }
      case LayerKind::SoftmaxXent: {
        const std::size_t classes = in.size();
        if (!all_finite(cur)) throw NumericalError("forward: non-finite logits");
        res.logits = Matrix(count, classes, cur);
        const Matrix probs = softmax(res.logits);
        cache.probs.assign(probs.data().begin(), probs.data().end());
        next = cur;
        break;
      }
    }
    cache.inputs[i] = std::move(cur);
    cur = std::move(next);
  }
  return res;
}

Gradients backward(const ModelParams& model, ForwardCache& cache,
                   std::span<const std::uint8_t> labels) {
  require(!cache.consumed, "backward: forward cache already consumed");
  require(cache.model_version == model.version(), "backward: stale forward cache (model changed)");
  require(labels.size() == cache.batch, "backward: label count does not match batch");
  cache.consumed = true;

  const auto& arch = model.arch();
  const std::size_t L = arch.layers().size();
  const std::size_t B = cache.batch;
  const std::size_t classes = arch.num_classes();

  Gradients g;
  g.layers.resize(L);
  std::vector<double> grad(B * classes);
  double loss = 0.0;
  for (std::size_t b = 0; b < B; ++b) {
    require(labels[b] < classes, "backward: label out of range");
    for (std::size_t j = 0; j < classes; ++j) {
      const double p = cache.probs[b * classes + j];
      grad[b * classes + j] = (p - (j == labels[b] ? 1.0 : 0.0)) / static_cast<double>(B);
    }
    loss -= std::log(std::max(cache.probs[b * classes + labels[b]], 1e-300));
  }
  g.loss = loss / static_cast<double>(B);

  for (std::size_t i = L - 1; i-- > 0;) {
    const auto& l = arch.layers()[i];
    const Shape3& in = arch.shape_at(i);
    const auto& x = cache.inputs[i];
    std::vector<double> dx;
    const bool need_dx = i > 0;
    switch (l.kind) {
      case LayerKind::Conv: {
        const auto s = conv_shape(l, in, B);
        auto& gl = g.layers[i];
        gl.weights.assign(s.weight_size(), 0.0);
        gl.bias.assign(l.out_c, 0.0);
        if (need_dx) dx.assign(s.input_size(), 0.0);
        kernels::parallel::conv2d_backward(s, x, model.layer(i).weights, grad, gl.weights, gl.bias, dx);
        break;
      }
      case LayerKind::Relu:
        dx = grad;
        for (std::size_t j = 0; j < dx.size(); ++j)
          if (!(x[j] > 0.0)) dx[j] = 0.0;
        break;
      case LayerKind::MaxPool: {
        dx.assign(x.size(), 0.0);
        const auto& arg = cache.argmax[i];
        for (std::size_t o = 0; o < grad.size(); ++o) dx[arg[o]] += grad[o];
        break;
      }
      case LayerKind::FullyConnected: {
        auto& gl = g.layers[i];
        gl.weights.assign(l.out_dim * l.in_dim, 0.0);
        gl.bias.assign(l.out_dim, 0.0);
        kernels::parallel::gemm_tn(grad, x, gl.weights, l.out_dim, B, l.in_dim);
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t o = 0; o < l.out_dim; ++o) gl.bias[o] += grad[b * l.out_dim + o];
        if (need_dx) {
          dx.assign(B * l.in_dim, 0.0);
          kernels::parallel::gemm(grad, model.layer(i).weights, dx, B, l.out_dim, l.in_dim);
        }
        break;
      }
      case LayerKind::SoftmaxXent:
        dx = grad;
        break;
    }
    grad = std::move(dx);
  }
  return g;
}

void TrainConfig::validate() const {
  require(learning_rate > 0.0, "TrainConfig: learning_rate must be > 0");
  require(momentum >= 0.0 && momentum < 1.0, "TrainConfig: momentum must lie in [0, 1)");
  require(batch_size >= 1, "TrainConfig: batch_size must be >= 1");
  require(lr_decay > 0.0 && lr_decay_every >= 1, "TrainConfig: bad learning-rate schedule");
}

double TrainConfig::rate_at(std::size_t epoch) const {
  return learning_rate * std::pow(lr_decay, static_cast<double>(epoch / lr_decay_every));
}

void sgd_step(ModelParams& model, const Gradients& grads, const ExtraGradients* extra,
              const TrainConfig& config, double learning_rate, MomentumState& state) {
  const std::size_t L = model.layers().size();
  require(grads.layers.size() == L, "sgd_step: gradient layer count mismatch");
  require(!extra || extra->size() == L, "sgd_step: extra gradient layer count mismatch");
  if (state.velocity.size() != L) {
    state.velocity.assign(L, {});
    for (std::size_t i = 0; i < L; ++i) {
      state.velocity[i].weights.assign(model.layer(i).weights.size(), 0.0);
      state.velocity[i].bias.assign(model.layer(i).bias.size(), 0.0);
    }
  }
  const double mu = config.momentum;
  for (std::size_t i = 0; i < L; ++i) {
    auto& p = model.layer(i);
    const auto& gl = grads.layers[i];
    auto& v = state.velocity[i];
    if (p.weights.empty()) continue;
    require(gl.weights.size() == p.weights.size() && gl.bias.size() == p.bias.size(),
            "sgd_step: gradient shape mismatch at layer " + std::to_string(i));
    const std::vector<double>* ex = (extra && !(*extra)[i].empty()) ? &(*extra)[i] : nullptr;
    require(!ex || ex->size() == p.weights.size(),
            "sgd_step: extra gradient shape mismatch at layer " + std::to_string(i));
    for (std::size_t j = 0; j < p.weights.size(); ++j) {
      const double gj = ex ? gl.weights[j] + (*ex)[j] : gl.weights[j];
      v.weights[j] = mu * v.weights[j] + gj;
      p.weights[j] -= learning_rate * v.weights[j];
    }
    for (std::size_t j = 0; j < p.bias.size(); ++j) {
      v.bias[j] = mu * v.bias[j] + gl.bias[j];
      p.bias[j] -= learning_rate * v.bias[j];
    }
  }
}

std::string format_epoch_record(const EpochRecord& rec) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "epoch=%zu loss=%.6f accuracy=%.4f penalty=[", rec.epoch, rec.loss,
                rec.accuracy);
  std::string out = buf;
  for (std::size_t i = 0; i < rec.penalties.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%s%.6e", i ? "," : "", rec.penalties[i]);
    out += buf;
  }
  return out + "]";
}

namespace {

std::size_t argmax_row(const Matrix& m, std::size_t row) {
  const auto r = m.row(row);
  return static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
}

void check_dataset_fits(const ModelParams& model, const Dataset& data) {
  data.validate();
  const auto& in = model.arch().input();
  require(data.channels == in.c && data.height == in.h && data.width == in.w,
          "dataset image shape does not match the model input");
  require(data.num_classes <= model.arch().num_classes(), "dataset has more classes than the model");
}

}  // namespace

TrainResult train(ModelParams model, const Dataset& data, const TrainConfig& config, TrainHook* hook,
                  const EpochCallback& on_epoch) {
  config.validate();
  check_dataset_fits(model, data);
  require(data.size() > 0, "train: empty dataset");

  TrainResult result;
  MomentumState state;
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t img = data.image_size();
  std::vector<double> buf;
  std::vector<std::uint8_t> labels;
  ExtraGradients extra;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    if (hook) hook->on_epoch_begin(epoch, model);
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = config.rate_at(epoch);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t bs = std::min(config.batch_size, order.size() - start);
      buf.resize(bs * img);
      labels.resize(bs);
      for (std::size_t b = 0; b < bs; ++b) {
        const auto im = data.image(order[start + b]);
        std::copy(im.begin(), im.end(), buf.begin() + b * img);
        labels[b] = data.labels[order[start + b]];
      }
      ForwardResult fr;
      try {
        fr = forward(model, buf, bs);
      } catch (const NumericalError&) {
        throw TrainingDivergedError(static_cast<int>(epoch), "training diverged in epoch " + std::to_string(epoch));
      }
      for (std::size_t b = 0; b < bs; ++b) correct += argmax_row(fr.logits, b) == labels[b];
      const Gradients g = backward(model, fr.cache, labels);
      if (!std::isfinite(g.loss))
        throw TrainingDivergedError(static_cast<int>(epoch),
                                    "training diverged in epoch " + std::to_string(epoch));
      loss_sum += g.loss * static_cast<double>(bs);
      if (hook) {
        extra.assign(model.layers().size(), {});
        hook->extra_gradients(model, extra);
        sgd_step(model, g, &extra, config, lr, state);
      } else {
        sgd_step(model, g, nullptr, config, lr, state);
      }
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / static_cast<double>(data.size());
    rec.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
    if (hook) rec.penalties = hook->penalties(model);
    for (std::size_t i = 0; i < model.layers().size(); ++i)
      if (!all_finite(model.layer(i).weights))
        throw TrainingDivergedError(static_cast<int>(epoch),
                                    "non-finite weights after epoch " + std::to_string(epoch));
    if (on_epoch) on_epoch(rec);
    result.log.push_back(std::move(rec));
  }
  result.model = std::move(model);
  return result;
}

double evaluate(const ModelParams& model, const Dataset& data) {
  require(data.size() > 0, "evaluate: empty dataset");
  check_dataset_fits(model, data);
  constexpr std::size_t kChunk = 256;
  const std::size_t img = data.image_size();
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += kChunk) {
    const std::size_t bs = std::min(kChunk, data.size() - start);
    const auto batch = std::span<const double>(data.images).subspan(start * img, bs * img);
    const auto fr = forward(model, batch, bs);
    for (std::size_t b = 0; b < bs; ++b) correct += argmax_row(fr.logits, b) == data.labels[start + b];
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace dkm
