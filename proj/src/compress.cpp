#include "dkm/compress.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "binio.hpp"
#include "dkm/error.hpp"
#include "model_io.hpp"

namespace dkm {

namespace {
constexpr char kMagic[4] = {'D', 'K', 'M', 'C'};
constexpr std::uint16_t kVersion = 1;

std::size_t bounded_count(binio::Reader& r) {
  const std::size_t n = r.u32();
  if (n > r.remaining()) throw FormatError(r.what() + ": bad element count");
  return n;
}
}  // namespace

double ShareConfig::first_rate() const {
  return first_layer_rate ? *first_layer_rate : std::min(1.0, 4.0 * cluster_rate);
}

void ShareConfig::validate(std::size_t conv_layer_count) const {
  require(cluster_rate > 0.0 && cluster_rate <= 1.0, "ShareConfig: cluster_rate must lie in (0, 1]");
  const double fr = first_rate();
  require(fr > 0.0 && fr <= 1.0, "ShareConfig: first_layer_rate must lie in (0, 1]");
  require(sparsity_p.empty() || sparsity_p.size() == conv_layer_count,
          "ShareConfig: sparsity_p needs one entry per conv layer (" + std::to_string(conv_layer_count) + ")");
  for (double p : sparsity_p) require(p >= 0.0 && p < 1.0, "ShareConfig: sparsity p must lie in [0, 1)");
  require(per_layer_k.empty() || per_layer_k.size() == conv_layer_count,
          "ShareConfig: per_layer_k needs one entry per conv layer (" + std::to_string(conv_layer_count) + ")");
  require(weight_bits >= 1 && weight_bits <= 64, "ShareConfig: weight_bits must lie in [1, 64]");
}

std::vector<std::size_t> allocate_k(const Architecture& arch, const ShareConfig& config) {
  const auto conv = arch.conv_layers();
  config.validate(conv.size());
  std::vector<std::size_t> ks;
  for (std::size_t i = 0; i < conv.size(); ++i) {
    const auto& l = arch.layers()[conv[i]];
    const std::size_t n = l.kernel * l.in_c * l.out_c;
    if (!config.per_layer_k.empty()) {
      require(config.per_layer_k[i] >= 1 && config.per_layer_k[i] <= n,
              "ShareConfig: K for conv layer " + std::to_string(i) + " must lie in [1, " + std::to_string(n) + "]");
      ks.push_back(config.per_layer_k[i]);
      continue;
    }
    const double rate = i == 0 ? config.first_rate() : config.cluster_rate;
    const auto k = static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
    ks.push_back(std::clamp<std::size_t>(k, 1, n));
  }
  return ks;
}

unsigned index_bits(std::size_t k) {
  unsigned bits = 0;
  while ((std::size_t{1} << bits) < k) ++bits;
  return bits;
}

std::uint64_t model_hash(const ModelParams& model) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](const std::vector<double>& values) {
    for (double v : values) {
      const float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      for (int i = 0; i < 4; ++i) {
        h ^= (bits >> (8 * i)) & 0xffu;
        h *= 0x100000001b3ull;
      }
    }
  };
  for (const auto& l : model.layers()) {
    mix(l.weights);
    mix(l.bias);
  }
  return h;
}

CompressedModel share(const ModelParams& model, const ShareConfig& config) {
  const auto& arch = model.arch();
  const auto conv = arch.conv_layers();
  const auto ks = allocate_k(arch, config);

  CompressedModel cm;
  cm.source_hash = model_hash(model);
  cm.config = config;
  cm.passthrough = model;
  for (auto layer : conv) std::fill(cm.passthrough.layer(layer).weights.begin(),
                                    cm.passthrough.layer(layer).weights.end(), 0.0);

  for (std::size_t i = 0; i < conv.size(); ++i) {
    CompressedLayer out;
    out.layer_index = conv[i];
    out.dims = model.conv_dims(conv[i]);
    const Matrix w = reshape_rows(model.conv_tensor(conv[i]));
    KMeansOptions opts = config.kmeans;
    opts.seed += i;
    const double p = config.sparsity_p.empty() ? 0.0 : config.sparsity_p[i];
    try {
      out.codebook = p > 0.0 ? kmeans_with_zero_cluster(w, ks[i], p, opts) : kmeans(w, ks[i], opts);
    } catch (const Error& e) {
      throw ContractError("share: conv layer " + std::to_string(conv[i]) + ": " + e.what());
    }
    for (auto& v : out.codebook.centers.data()) v = static_cast<float>(v);
    out.codebook.inertia = within_cluster_ss(w, out.codebook);
    cm.layers.push_back(std::move(out));
  }
  return cm;
}

ModelParams reconstruct(const CompressedModel& cm) {
  ModelParams model = cm.passthrough;
  for (const auto& l : cm.layers) {
    const auto& cb = l.codebook;
    const std::size_t s = l.dims.s2, n = l.dims.s1 * l.dims.c * l.dims.m;
    if (cb.dim() != s || cb.assignments.size() != n)
      throw FormatError("reconstruct: codebook shape does not match layer " + std::to_string(l.layer_index));
    Matrix w(s, n);
    for (std::size_t j = 0; j < n; ++j) {
      const auto a = cb.assignments[j];
      if (a >= cb.k())
        throw FormatError("reconstruct: corrupt index " + std::to_string(a) + " in layer " +
                          std::to_string(l.layer_index) + " (K = " + std::to_string(cb.k()) + ")");
      for (std::size_t i = 0; i < s; ++i) w(i, j) = cb.centers(i, a);
    }
    model.set_conv_tensor(l.layer_index, unreshape_rows(w, l.dims));
  }
  return model;
}

double compression_ratio(std::span<const LayerFootprint> layers, unsigned weight_bits) {
  double original = 0.0, compressed = 0.0;
  for (const auto& l : layers) {
    original += static_cast<double>(l.n * l.s) * weight_bits;
    compressed += static_cast<double>(l.k * l.s) * weight_bits + static_cast<double>(l.n) * index_bits(l.k);
  }
  require(compressed > 0.0, "compression_ratio: no conv layers");
  return original / compressed;
}

double compression_ratio(const ModelParams& model, const CompressedModel& cm) {
  const auto conv = model.arch().conv_layers();
  require(conv.size() == cm.layers.size(), "compression_ratio: models do not correspond");
  std::vector<LayerFootprint> fp;
  for (std::size_t i = 0; i < conv.size(); ++i) {
    const auto& l = cm.layers[i];
    require(l.layer_index == conv[i] && l.dims == model.conv_dims(conv[i]),
            "compression_ratio: models do not correspond");
    fp.push_back({l.dims.s2, l.dims.s1 * l.dims.c * l.dims.m, l.codebook.k()});
  }
  return compression_ratio(fp, cm.config.weight_bits);
}

std::size_t k_for_layer_ratio(std::size_t s, std::size_t n, unsigned weight_bits, double target) {
  for (std::size_t k = n; k > 1; --k) {
    const LayerFootprint fp{s, n, k};
    if (compression_ratio(std::span(&fp, 1), weight_bits) >= target) return k;
  }
  return 1;
}

std::vector<std::uint8_t> encode_compressed(const CompressedModel& cm) {
  binio::Writer w;
  w.bytes(kMagic, 4);
  w.u16(kVersion);
  w.u16(static_cast<std::uint16_t>(cm.layers.size()));
  for (const auto& l : cm.layers) {
    const auto& cb = l.codebook;
    w.u32(static_cast<std::uint32_t>(l.dims.s1));
    w.u32(static_cast<std::uint32_t>(l.dims.s2));
    w.u32(static_cast<std::uint32_t>(l.dims.c));
    w.u32(static_cast<std::uint32_t>(l.dims.m));
    w.u32(static_cast<std::uint32_t>(cb.k()));
    for (std::size_t c = 0; c < cb.k(); ++c)
      for (std::size_t i = 0; i < cb.dim(); ++i) w.f32(static_cast<float>(cb.centers(i, c)));
    const unsigned bits = index_bits(cb.k());
    std::vector<std::uint8_t> packed((cb.assignments.size() * bits + 7) / 8, 0);
    std::size_t bit = 0;
    for (auto a : cb.assignments)
      for (unsigned b = 0; b < bits; ++b, ++bit)
        if ((a >> b) & 1u) packed[bit / 8] |= static_cast<std::uint8_t>(1u << (bit % 8));
    w.bytes(packed.data(), packed.size());
  }

  binio::Writer p;
  const auto& c = cm.config;
  p.u64(cm.source_hash);
  p.f64(c.cluster_rate);
  p.u8(c.first_layer_rate.has_value());
  p.f64(c.first_layer_rate.value_or(0.0));
  p.u32(c.weight_bits);
  p.u64(c.kmeans.seed);
  p.u32(static_cast<std::uint32_t>(c.kmeans.max_iter));
  p.f64(c.kmeans.tol);
  p.u32(static_cast<std::uint32_t>(c.kmeans.restarts));
  p.u32(static_cast<std::uint32_t>(c.sparsity_p.size()));
  for (double v : c.sparsity_p) p.f64(v);
  p.u32(static_cast<std::uint32_t>(c.per_layer_k.size()));
  for (auto k : c.per_layer_k) p.u32(static_cast<std::uint32_t>(k));
  model_io::write_architecture(p, cm.passthrough.arch());
  model_io::write_params(p, cm.passthrough, /*include_conv_weights=*/false);
  w.u32(static_cast<std::uint32_t>(p.buffer().size()));
  w.bytes(p.buffer().data(), p.buffer().size());
  binio::seal(w);
  return std::move(w.buffer());
}

CompressedModel decode_compressed(std::span<const std::uint8_t> bytes) {
  const std::string what = "DKMC";
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw FormatError("DKMC: bad magic");
  const std::uint16_t version = static_cast<std::uint16_t>(bytes[4] | (bytes[5] << 8));
  if (version > kVersion) throw UnsupportedVersionError("DKMC: unsupported version " + std::to_string(version));
  binio::Reader r(binio::unseal(bytes, what), what);
  r.take(6);
  const std::size_t count = r.u16();

  CompressedModel cm;
  std::vector<CompressedLayer> layers(count);
  for (auto& l : layers) {
    l.dims.s1 = r.u32();
    l.dims.s2 = r.u32();
    l.dims.c = r.u32();
    l.dims.m = r.u32();
    const std::size_t k = r.u32();
    const std::size_t s = l.dims.s2, n = l.dims.s1 * l.dims.c * l.dims.m;
    if (l.dims.s1 != l.dims.s2 || n == 0 || k == 0 || k > n) throw FormatError("DKMC: bad layer header");
    std::vector<double> centers(s * k);
    for (std::size_t c = 0; c < k; ++c)
      for (std::size_t i = 0; i < s; ++i) {
        const double v = r.f32();
        if (!std::isfinite(v)) throw FormatError("DKMC: non-finite center");
        centers[i * k + c] = v;
      }
    l.codebook.centers = Matrix(s, k, std::move(centers));
    const unsigned bits = index_bits(k);
    const auto packed = r.take((n * bits + 7) / 8);
    l.codebook.assignments.assign(n, 0);
    std::size_t bit = 0;
    for (auto& a : l.codebook.assignments)
      for (unsigned b = 0; b < bits; ++b, ++bit)
        if ((packed[bit / 8] >> (bit % 8)) & 1u) a |= 1u << b;
    for (auto a : l.codebook.assignments)
      if (a >= k) throw FormatError("DKMC: corrupt index " + std::to_string(a) + " (K = " + std::to_string(k) + ")");
  }

  const std::size_t section = r.u32();
  if (section != r.remaining()) throw FormatError("DKMC: passthrough section length mismatch");
  auto& c = cm.config;
  cm.source_hash = r.u64();
  c.cluster_rate = r.f64();
  const bool has_first = r.u8() != 0;
  const double first = r.f64();
  if (has_first) c.first_layer_rate = first;
  c.weight_bits = r.u32();
  c.kmeans.seed = r.u64();
  c.kmeans.max_iter = r.u32();
  c.kmeans.tol = r.f64();
  c.kmeans.restarts = r.u32();
  c.sparsity_p.resize(bounded_count(r));
  for (auto& v : c.sparsity_p) v = r.f64();
  c.per_layer_k.resize(bounded_count(r));
  for (auto& k : c.per_layer_k) k = r.u32();
  cm.passthrough = ModelParams(model_io::read_architecture(r));
  model_io::read_params(r, cm.passthrough, /*include_conv_weights=*/false);
  if (r.remaining() != 0) throw FormatError("DKMC: trailing bytes");

  const auto conv = cm.passthrough.arch().conv_layers();
  if (conv.size() != layers.size()) throw FormatError("DKMC: layer count does not match architecture");
  for (std::size_t i = 0; i < conv.size(); ++i) {
    if (!(layers[i].dims == cm.passthrough.conv_dims(conv[i])))
      throw FormatError("DKMC: layer dims do not match architecture");
    layers[i].layer_index = conv[i];
    layers[i].codebook.inertia = std::numeric_limits<double>::quiet_NaN();  // source weights are not stored
  }
  cm.layers = std::move(layers);
  return cm;
}

void save_compressed(const std::filesystem::path& path, const CompressedModel& cm) {
  binio::write_file(path, encode_compressed(cm));
}

CompressedModel load_compressed(const std::filesystem::path& path) {
  return decode_compressed(binio::read_file(path));
}

}  // namespace dkm
