#pragma once

// Architecture and parameter blocks shared by the DKMM and DKMC formats.

#include "binio.hpp"
#include "dkm/nn.hpp"

namespace dkm::model_io {

/// u32 in_c, in_h, in_w, u32 layer count, then per layer a u8 kind followed by
/// kind-specific u32 fields (conv: kernel, in_c, out_c, stride, padding;
/// pool: window, stride; fc: in, out).
void write_architecture(binio::Writer& w, const Architecture& arch);
Architecture read_architecture(binio::Reader& r);

/// float32 weights then bias of every selected layer, in architecture order.
void write_params(binio::Writer& w, const ModelParams& model, bool include_conv_weights);
void read_params(binio::Reader& r, ModelParams& model, bool include_conv_weights);

}  // namespace dkm::model_io
