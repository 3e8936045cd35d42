#include "dkm/dataio.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

#include <zlib.h>

#include "binio.hpp"
#include "dkm/error.hpp"
#include "model_io.hpp"

namespace dkm {

namespace model_io {

void write_architecture(binio::Writer& w, const Architecture& arch) {
  w.u32(static_cast<std::uint32_t>(arch.input().c));
  w.u32(static_cast<std::uint32_t>(arch.input().h));
  w.u32(static_cast<std::uint32_t>(arch.input().w));
  w.u32(static_cast<std::uint32_t>(arch.layers().size()));
  for (const auto& l : arch.layers()) {
    w.u8(static_cast<std::uint8_t>(l.kind));
    switch (l.kind) {
      case LayerKind::Conv:
        w.u32(static_cast<std::uint32_t>(l.kernel));
        w.u32(static_cast<std::uint32_t>(l.in_c));
        w.u32(static_cast<std::uint32_t>(l.out_c));
        w.u32(static_cast<std::uint32_t>(l.stride));
        w.u32(static_cast<std::uint32_t>(l.padding));
        break;
      case LayerKind::MaxPool:
        w.u32(static_cast<std::uint32_t>(l.window));
        w.u32(static_cast<std::uint32_t>(l.stride));
        break;
      case LayerKind::FullyConnected:
        w.u32(static_cast<std::uint32_t>(l.in_dim));
        w.u32(static_cast<std::uint32_t>(l.out_dim));
        break;
      case LayerKind::Relu:
      case LayerKind::SoftmaxXent:
        break;
    }
  }
}

Architecture read_architecture(binio::Reader& r) {
  Shape3 input;
  input.c = r.u32();
  input.h = r.u32();
  input.w = r.u32();
  const std::size_t count = r.u32();
  if (count > r.remaining()) throw FormatError(r.what() + ": bad layer count");
  std::vector<LayerSpec> layers;
  for (std::size_t i = 0; i < count; ++i) {
    const auto kind = r.u8();
    switch (static_cast<LayerKind>(kind)) {
      case LayerKind::Conv: {
        const std::size_t s = r.u32(), c = r.u32(), m = r.u32(), stride = r.u32();
        const auto pad = r.u32();
        if (pad > 1) throw FormatError(r.what() + ": bad padding");
        layers.push_back(LayerSpec::conv(s, c, m, stride, static_cast<Padding>(pad)));
        break;
      }
      case LayerKind::MaxPool: {
        const std::size_t window = r.u32(), stride = r.u32();
        layers.push_back(LayerSpec::maxpool(window, stride));
        break;
      }
      case LayerKind::FullyConnected: {
        const std::size_t in = r.u32(), out = r.u32();
        layers.push_back(LayerSpec::fc(in, out));
        break;
      }
      case LayerKind::Relu:
        layers.push_back(LayerSpec::relu());
        break;
      case LayerKind::SoftmaxXent:
        layers.push_back(LayerSpec::softmax_xent());
        break;
      default:
        throw FormatError(r.what() + ": unknown layer kind " + std::to_string(kind));
    }
  }
  try {
    return Architecture(input, std::move(layers));
  } catch (const ContractError& e) {
    throw FormatError(r.what() + ": invalid architecture: " + e.what());
  }
}

void write_params(binio::Writer& w, const ModelParams& model, bool include_conv_weights) {
  const auto& specs = model.arch().layers();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& l = model.layers()[i];
    if (specs[i].kind != LayerKind::Conv || include_conv_weights)
      for (double v : l.weights) w.f32(static_cast<float>(v));
    for (double v : l.bias) w.f32(static_cast<float>(v));
  }
}

void read_params(binio::Reader& r, ModelParams& model, bool include_conv_weights) {
  const auto& specs = model.arch().layers();
  for (std::size_t i = 0; i < specs.size(); ++i) {
    auto& l = model.layer(i);
    auto fill = [&](std::vector<double>& values) {
      for (auto& v : values) {
        v = r.f32();
        if (!std::isfinite(v)) throw FormatError(r.what() + ": non-finite parameter");
      }
    };
    if (specs[i].kind != LayerKind::Conv || include_conv_weights) fill(l.weights);
    fill(l.bias);
  }
}

}  // namespace model_io

namespace {

constexpr char kModelMagic[4] = {'D', 'K', 'M', 'M'};
constexpr std::uint16_t kModelMajor = 1;
constexpr std::uint16_t kModelMinor = 0;

std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path) {
  gzFile f = gzopen(path.c_str(), "rb");
  if (!f) throw FormatError("cannot open " + path.string());
  std::vector<std::uint8_t> out;
  std::uint8_t buf[1 << 16];
  int n;
  while ((n = gzread(f, buf, sizeof buf)) > 0) out.insert(out.end(), buf, buf + n);
  int err = Z_OK;
  const char* msg = n < 0 ? gzerror(f, &err) : nullptr;
  const std::string detail = msg ? msg : "";
  gzclose(f);
  if (n < 0) throw FormatError(path.string() + ": " + detail);
  return out;
}

std::uint32_t be32(std::span<const std::uint8_t> b, std::size_t pos) {
  return (std::uint32_t{b[pos]} << 24) | (std::uint32_t{b[pos + 1]} << 16) | (std::uint32_t{b[pos + 2]} << 8) |
         std::uint32_t{b[pos + 3]};
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

std::filesystem::path find_variant(const std::filesystem::path& base) {
  if (std::filesystem::exists(base)) return base;
  auto gz = base;
  gz += ".gz";
  if (std::filesystem::exists(gz)) return gz;
  throw FormatError("missing dataset file " + base.string() + "[.gz]");
}

}  // namespace

IdxTensor parse_idx(std::span<const std::uint8_t> bytes, IdxKind expected) {
  if (bytes.size() < 4) throw FormatError("IDX: truncated header");
  const std::uint32_t magic = be32(bytes, 0);
  if (magic != static_cast<std::uint32_t>(expected))
    throw FormatError("IDX: bad magic " + hex32(magic) + ", expected " +
                      hex32(static_cast<std::uint32_t>(expected)));
  IdxTensor t;
  t.kind = expected;
  const std::size_t ndim = magic & 0xffu;
  if (bytes.size() < 4 + 4 * ndim) throw FormatError("IDX: truncated header");
  std::size_t total = 1;
  for (std::size_t i = 0; i < ndim; ++i) {
    t.dims.push_back(be32(bytes, 4 + 4 * i));
    total *= t.dims.back();
  }
  const std::size_t payload = bytes.size() - 4 - 4 * ndim;
  if (payload < total) throw FormatError("IDX: truncated payload");
  if (payload > total) throw FormatError("IDX: trailing bytes after payload");
  t.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(4 + 4 * ndim), bytes.end());
  return t;
}

IdxTensor load_idx(const std::filesystem::path& path, IdxKind expected) {
  try {
    return parse_idx(read_maybe_gzip(path), expected);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

Dataset load_mnist(const std::filesystem::path& dir, const std::string& split) {
  if (split != "train" && split != "t10k") throw ContractError("unknown MNIST split '" + split + "'");
  const auto images = load_idx(find_variant(dir / (split + "-images-idx3-ubyte")), IdxKind::Images);
  const auto labels = load_idx(find_variant(dir / (split + "-labels-idx1-ubyte")), IdxKind::Labels);
  if (images.dims.size() != 3 || labels.dims.size() != 1 || images.dims[0] != labels.dims[0])
    throw FormatError("MNIST " + split + ": image and label files do not match");
  Dataset d;
  d.channels = 1;
  d.height = images.dims[1];
  d.width = images.dims[2];
  d.num_classes = 10;
  d.split = split;
  d.images.resize(images.data.size());
  for (std::size_t i = 0; i < images.data.size(); ++i) d.images[i] = images.data[i] / 255.0;
  d.labels = labels.data;
  for (auto l : d.labels)
    if (l >= d.num_classes) throw FormatError("MNIST " + split + ": label " + std::to_string(l) + " out of range");
  return d;
}

std::vector<std::uint8_t> encode_model(const ModelParams& model) {
  binio::Writer w;
  w.bytes(kModelMagic, 4);
  w.u16(kModelMajor);
  w.u16(kModelMinor);
  model_io::write_architecture(w, model.arch());
  model_io::write_params(w, model, /*include_conv_weights=*/true);
  binio::seal(w);
  return std::move(w.buffer());
}

ModelParams decode_model(std::span<const std::uint8_t> bytes) {
  const std::string what = "DKMM";
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kModelMagic, 4) != 0) throw FormatError("DKMM: bad magic");
  const auto major = static_cast<std::uint16_t>(bytes[4] | (bytes[5] << 8));
  if (major > kModelMajor) throw UnsupportedVersionError("DKMM: unsupported major version " + std::to_string(major));
  binio::Reader r(binio::unseal(bytes, what), what);
  r.take(8);
  ModelParams model(model_io::read_architecture(r));
  model_io::read_params(r, model, /*include_conv_weights=*/true);
  if (r.remaining() != 0) throw FormatError("DKMM: trailing bytes");
  return model;
}

void save_model(const std::filesystem::path& path, const ModelParams& model) {
  binio::write_file(path, encode_model(model));
}

ModelParams load_model(const std::filesystem::path& path) { return decode_model(binio::read_file(path)); }

bool is_compressed_file(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw FormatError("cannot open " + path.string());
  char magic[4] = {};
  const auto n = std::fread(magic, 1, 4, f);
  std::fclose(f);
  return n == 4 && std::memcmp(magic, "DKMC", 4) == 0;
}

}  // namespace dkm
