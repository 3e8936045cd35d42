#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dkm/matrix.hpp"

namespace dkm {

/// Shared-parameter representation of one reshaped layer.
struct Codebook {
  Matrix centers;                          // s x K, column j is center j
  std::vector<std::uint32_t> assignments;  // one index per column of W
  double inertia = 0.0;                    // within-cluster sum of squares

  std::size_t k() const noexcept { return centers.cols(); }
  std::size_t dim() const noexcept { return centers.rows(); }
};

struct KMeansOptions {
  std::uint64_t seed = 0;
  std::size_t max_iter = 100;
  double tol = 1e-6;         // relative inertia improvement that counts as converged
  std::size_t restarts = 3;  // best inertia wins
};

/// One Lloyd run from given centers. `inertia_trace` receives the inertia after
/// every assignment step, which is non-increasing.
struct LloydRun {
  Codebook codebook;
  std::vector<double> inertia_trace;
  std::size_t iterations = 0;
};

LloydRun lloyd(const Matrix& w, Matrix initial_centers, std::size_t max_iter, double tol);

/// k-means++ seeding over the columns of w; returns s x k centers.
/// Single-point transfer passes (move one column to another cluster whenever that
/// lowers the within-cluster sum of squares) until none helps. Never raises inertia;
/// every result is also a Lloyd fixed point.
Codebook hartigan_refine(const Matrix& w, Codebook cb);

Matrix kmeans_pp_seed(const Matrix& w, std::size_t k, std::uint64_t seed);

/// Lloyd k-means over the N columns of an s x N matrix, k-means++ seeded.
/// k == N short-circuits to the singleton clustering (inertia exactly 0).
Codebook kmeans(const Matrix& w, std::size_t k, const KMeansOptions& opts = {});

/// Number of columns pinned to the zero cluster: ceil(p * N).
std::size_t zero_cluster_size(std::size_t n, double p);

/// Sparsity-promoting variant: the ceil(pN) smallest-norm columns (ties broken by
/// column index) go to cluster 0, whose center is the zero vector; the rest are
/// clustered into k - 1 groups that become centers 1..k-1. p == 0 is plain kmeans.
Codebook kmeans_with_zero_cluster(const Matrix& w, std::size_t k, double p,
                                  const KMeansOptions& opts = {});

/// Indices of the ceil(pN) smallest-l2-norm columns, stable by column index.
std::vector<std::size_t> smallest_norm_columns(const Matrix& w, std::size_t count);

/// Replaces every column by its assigned center.
Matrix quantize(const Matrix& w, const Codebook& cb);

/// sum_i ||w_i - center_{a(i)}||^2 recomputed from scratch.
double within_cluster_ss(const Matrix& w, const Codebook& cb);

}  // namespace dkm
