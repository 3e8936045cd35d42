#include <limits>

#include "dkm/kernels.hpp"

namespace dkm::kernels::serial {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] += acc;
    }
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
      c[i * n + j] += acc;
    }
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      c[i * n + j] += acc;
    }
}

// Direct convolution, no im2col.
void conv2d_forward(const ConvShape& s, std::span<const double> input,
                    std::span<const double> weights, std::span<const double> bias,
                    std::span<double> output) {
  const std::size_t oh = s.out_h(), ow = s.out_w(), kk = s.kernel;
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t o = 0; o < s.out_c; ++o)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double acc = bias[o];
          for (std::size_t ci = 0; ci < s.in_c; ++ci)
            for (std::size_t ky = 0; ky < kk; ++ky) {
              const long iy = static_cast<long>(oy * s.stride + ky) - static_cast<long>(s.pad);
              if (iy < 0 || iy >= static_cast<long>(s.in_h)) continue;
              for (std::size_t kx = 0; kx < kk; ++kx) {
                const long ix = static_cast<long>(ox * s.stride + kx) - static_cast<long>(s.pad);
                if (ix < 0 || ix >= static_cast<long>(s.in_w)) continue;
                acc += input[((b * s.in_c + ci) * s.in_h + iy) * s.in_w + ix] *
                       weights[((o * s.in_c + ci) * kk + ky) * kk + kx];
              }
            }
          output[((b * s.out_c + o) * oh + oy) * ow + ox] = acc;
        }
}

void conv2d_backward(const ConvShape& s, std::span<const double> input,
                     std::span<const double> weights, std::span<const double> dout,
                     std::span<double> dweights, std::span<double> dbias,
                     std::span<double> dinput) {
  const std::size_t oh = s.out_h(), ow = s.out_w(), kk = s.kernel;
  for (auto& v : dweights) v = 0.0;
  for (auto& v : dbias) v = 0.0;
  for (auto& v : dinput) v = 0.0;
  const bool want_input = !dinput.empty();
  for (std::size_t b = 0; b < s.batch; ++b)
    for (std::size_t o = 0; o < s.out_c; ++o)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double g = dout[((b * s.out_c + o) * oh + oy) * ow + ox];
          dbias[o] += g;
          for (std::size_t ci = 0; ci < s.in_c; ++ci)
            for (std::size_t ky = 0; ky < kk; ++ky) {
              const long iy = static_cast<long>(oy * s.stride + ky) - static_cast<long>(s.pad);
              if (iy < 0 || iy >= static_cast<long>(s.in_h)) continue;
              for (std::size_t kx = 0; kx < kk; ++kx) {
                const long ix = static_cast<long>(ox * s.stride + kx) - static_cast<long>(s.pad);
                if (ix < 0 || ix >= static_cast<long>(s.in_w)) continue;
                const std::size_t in_idx = ((b * s.in_c + ci) * s.in_h + iy) * s.in_w + ix;
                const std::size_t w_idx = ((o * s.in_c + ci) * kk + ky) * kk + kx;
                dweights[w_idx] += g * input[in_idx];
                if (want_input) dinput[in_idx] += g * weights[w_idx];
              }
            }
        }
}

void nearest_center(std::span<const double> points, std::span<const double> centers,
                    std::size_t n, std::size_t d, std::size_t k,
                    std::span<std::uint32_t> labels, std::span<double> dist2) {
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t arg = 0;
    for (std::size_t c = 0; c < k; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = points[i * d + j] - centers[c * d + j];
        acc += diff * diff;
      }
      if (acc < best) {
        best = acc;
        arg = static_cast<std::uint32_t>(c);
      }
    }
    labels[i] = arg;
    dist2[i] = best;
  }
}

}  // namespace dkm::kernels::serial
