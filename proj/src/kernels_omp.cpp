#include <algorithm>
#include <limits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "dkm/kernels.hpp"

namespace dkm::kernels {

int max_threads() noexcept {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void set_threads(int n) noexcept {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

namespace {

// Row-range bodies shared by the parallel GEMMs and the per-sample conv code.
// i-p-j order keeps the innermost loop contiguous.
inline void gemm_row(const double* a, const double* b, double* c, std::size_t i, std::size_t k,
                     std::size_t n) {
  double* ci = c + i * n;
  const double* ai = a + i * k;
  for (std::size_t p = 0; p < k; ++p) {
    const double aip = ai[p];
    const double* bp = b + p * n;
#pragma omp simd
    for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
  }
}

inline void gemm_nt_row(const double* a, const double* b, double* c, std::size_t i,
                        std::size_t k, std::size_t n) {
  const double* ai = a + i * k;
  double* ci = c + i * n;
  for (std::size_t j = 0; j < n; ++j) {
    const double* bj = b + j * k;
    double acc = 0.0;
#pragma omp simd reduction(+ : acc)
    for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
    ci[j] += acc;
  }
}

inline void gemm_tn_row(const double* a, const double* b, double* c, std::size_t i,
                        std::size_t m, std::size_t k, std::size_t n) {
  double* ci = c + i * n;
  for (std::size_t p = 0; p < k; ++p) {
    const double api = a[p * m + i];
    if (api == 0.0) continue;
    const double* bp = b + p * n;
#pragma omp simd
    for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
  }
}

// One sample's receptive fields as a patch x positions matrix.
void im2col(const ConvShape& s, const double* in, double* cols) {
  const std::size_t oh = s.out_h(), ow = s.out_w(), kk = s.kernel, P = oh * ow;
  for (std::size_t ci = 0; ci < s.in_c; ++ci)
    for (std::size_t ky = 0; ky < kk; ++ky)
      for (std::size_t kx = 0; kx < kk; ++kx) {
        double* row = cols + ((ci * kk + ky) * kk + kx) * P;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const long iy = static_cast<long>(oy * s.stride + ky) - static_cast<long>(s.pad);
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const long ix = static_cast<long>(ox * s.stride + kx) - static_cast<long>(s.pad);
            const bool inside = iy >= 0 && iy < static_cast<long>(s.in_h) && ix >= 0 &&
                                ix < static_cast<long>(s.in_w);
            row[oy * ow + ox] = inside ? in[(ci * s.in_h + iy) * s.in_w + ix] : 0.0;
          }
        }
      }
}

void col2im(const ConvShape& s, const double* cols, double* in) {
  const std::size_t oh = s.out_h(), ow = s.out_w(), kk = s.kernel, P = oh * ow;
  for (std::size_t i = 0; i < s.in_c * s.in_h * s.in_w; ++i) in[i] = 0.0;
  for (std::size_t ci = 0; ci < s.in_c; ++ci)
    for (std::size_t ky = 0; ky < kk; ++ky)
      for (std::size_t kx = 0; kx < kk; ++kx) {
        const double* row = cols + ((ci * kk + ky) * kk + kx) * P;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const long iy = static_cast<long>(oy * s.stride + ky) - static_cast<long>(s.pad);
          if (iy < 0 || iy >= static_cast<long>(s.in_h)) continue;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const long ix = static_cast<long>(ox * s.stride + kx) - static_cast<long>(s.pad);
            if (ix < 0 || ix >= static_cast<long>(s.in_w)) continue;
            in[(ci * s.in_h + iy) * s.in_w + ix] += row[oy * ow + ox];
          }
        }
      }
}

}  // namespace

namespace parallel {

void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < m; ++i) gemm_row(a.data(), b.data(), c.data(), i, k, n);
}

void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < m; ++i) gemm_nt_row(a.data(), b.data(), c.data(), i, k, n);
}

void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n) {
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < m; ++i) gemm_tn_row(a.data(), b.data(), c.data(), i, m, k, n);
}

void conv2d_forward(const ConvShape& s, std::span<const double> input,
                    std::span<const double> weights, std::span<const double> bias,
                    std::span<double> output) {
  const std::size_t K = s.patch(), P = s.positions(), M = s.out_c;
  const std::size_t in_stride = s.in_c * s.in_h * s.in_w;
#pragma omp parallel
  {
    std::vector<double> cols(K * P);
#pragma omp for schedule(static)
    for (std::size_t b = 0; b < s.batch; ++b) {
      im2col(s, input.data() + b * in_stride, cols.data());
      double* out = output.data() + b * M * P;
      for (std::size_t o = 0; o < M; ++o)
        for (std::size_t p = 0; p < P; ++p) out[o * P + p] = bias[o];
      for (std::size_t o = 0; o < M; ++o) gemm_row(weights.data(), cols.data(), out, o, K, P);
    }
  }
}

// Per-sample partial gradients land in their own slots and are reduced in sample
// order afterwards, which keeps dweights independent of the schedule.
void conv2d_backward(const ConvShape& s, std::span<const double> input,
                     std::span<const double> weights, std::span<const double> dout,
                     std::span<double> dweights, std::span<double> dbias,
                     std::span<double> dinput) {
  const std::size_t K = s.patch(), P = s.positions(), M = s.out_c;
  const std::size_t in_stride = s.in_c * s.in_h * s.in_w;
  const std::size_t W = M * K;
  const bool want_input = !dinput.empty();
  std::vector<double> partial_w(s.batch * W, 0.0);
  std::vector<double> partial_b(s.batch * M, 0.0);
#pragma omp parallel
  {
    std::vector<double> cols(K * P);
    std::vector<double> dcols(want_input ? K * P : 0);
#pragma omp for schedule(static)
    for (std::size_t b = 0; b < s.batch; ++b) {
      im2col(s, input.data() + b * in_stride, cols.data());
      const double* g = dout.data() + b * M * P;
      double* pw = partial_w.data() + b * W;
      double* pb = partial_b.data() + b * M;
      for (std::size_t o = 0; o < M; ++o) {
        double acc = 0.0;
        for (std::size_t p = 0; p < P; ++p) acc += g[o * P + p];
        pb[o] = acc;
        gemm_nt_row(g, cols.data(), pw, o, P, K);
      }
      if (want_input) {
        std::fill(dcols.begin(), dcols.end(), 0.0);
        for (std::size_t r = 0; r < K; ++r) gemm_tn_row(weights.data(), g, dcols.data(), r, K, M, P);
        col2im(s, dcols.data(), dinput.data() + b * in_stride);
      }
    }
#pragma omp for schedule(static)
    for (std::size_t j = 0; j < W; ++j) {
      double acc = 0.0;
      for (std::size_t b = 0; b < s.batch; ++b) acc += partial_w[b * W + j];
      dweights[j] = acc;
    }
#pragma omp for schedule(static)
    for (std::size_t o = 0; o < M; ++o) {
      double acc = 0.0;
      for (std::size_t b = 0; b < s.batch; ++b) acc += partial_b[b * M + o];
      dbias[o] = acc;
    }
  }
}

void nearest_center(std::span<const double> points, std::span<const double> centers,
                    std::size_t n, std::size_t d, std::size_t k,
                    std::span<std::uint32_t> labels, std::span<double> dist2) {
#pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < n; ++i) {
    const double* pt = points.data() + i * d;
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t arg = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const double* ct = centers.data() + c * d;
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = pt[j] - ct[j];
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

}  // namespace parallel
}  // namespace dkm::kernels
