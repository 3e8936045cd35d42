#pragma once

// Data-parallel inner loops. Every kernel exists twice: `serial` is a plain,
// direct-formula reference kept for testing and benchmarking, `parallel` is the
// OpenMP version the library calls. Parallel kernels partition work so that each
// output element is summed in a fixed order, so results do not depend on the
// thread count.

#include <cstddef>
#include <cstdint>
#include <span>

namespace dkm::kernels {

/// Geometry of one batched 2-D convolution, NCHW activations, OIHW weights.
struct ConvShape {
  std::size_t batch = 1;
  std::size_t in_c = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t out_c = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t out_h() const noexcept { return (in_h + 2 * pad - kernel) / stride + 1; }
  std::size_t out_w() const noexcept { return (in_w + 2 * pad - kernel) / stride + 1; }
  std::size_t patch() const noexcept { return in_c * kernel * kernel; }
  std::size_t positions() const noexcept { return out_h() * out_w(); }
  std::size_t input_size() const noexcept { return batch * in_c * in_h * in_w; }
  std::size_t output_size() const noexcept { return batch * out_c * positions(); }
  std::size_t weight_size() const noexcept { return out_c * patch(); }
};

namespace serial {

// c (m x n) += a (m x k) * b (k x n)
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n);
// c (m x n) += a (m x k) * b^T, b is n x k
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
// c (m x n) += a^T * b, a is k x m, b is k x n
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);

void conv2d_forward(const ConvShape& shape, std::span<const double> input,
                    std::span<const double> weights, std::span<const double> bias,
                    std::span<double> output);
// Overwrites dweights and dbias; dinput is skipped when empty.
void conv2d_backward(const ConvShape& shape, std::span<const double> input,
                     std::span<const double> weights, std::span<const double> dout,
                     std::span<double> dweights, std::span<double> dbias,
                     std::span<double> dinput);

// points n x d, centers k x d, both row-major. Ties go to the lowest index.
void nearest_center(std::span<const double> points, std::span<const double> centers,
                    std::size_t n, std::size_t d, std::size_t k,
                    std::span<std::uint32_t> labels, std::span<double> dist2);

}  // namespace serial

namespace parallel {

// c (m x n) += a (m x k) * b (k x n)
void gemm(std::span<const double> a, std::span<const double> b, std::span<double> c,
          std::size_t m, std::size_t k, std::size_t n);
// c (m x n) += a (m x k) * b^T, b is n x k
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);
// c (m x n) += a^T * b, a is k x m, b is k x n
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
             std::size_t m, std::size_t k, std::size_t n);

void conv2d_forward(const ConvShape& shape, std::span<const double> input,
                    std::span<const double> weights, std::span<const double> bias,
                    std::span<double> output);
// Overwrites dweights and dbias; dinput is skipped when empty.
void conv2d_backward(const ConvShape& shape, std::span<const double> input,
                     std::span<const double> weights, std::span<const double> dout,
                     std::span<double> dweights, std::span<double> dbias,
                     std::span<double> dinput);

// points n x d, centers k x d, both row-major. Ties go to the lowest index.
void nearest_center(std::span<const double> points, std::span<const double> centers,
                    std::size_t n, std::size_t d, std::size_t k,
                    std::span<std::uint32_t> labels, std::span<double> dist2);

}  // namespace parallel

/// Threads the parallel kernels will use (1 without OpenMP).
int max_threads() noexcept;
/// Caps the thread count; no-op without OpenMP.
void set_threads(int n) noexcept;

}  // namespace dkm::kernels
