#pragma once

#include <cstddef>
#include <vector>

#include "dkm/matrix.hpp"

namespace dkm {

/// Top right singular vectors of a wide matrix.
struct SvdResult {
  std::vector<double> singular_values;  // descending, non-negative
  Matrix right_vectors;                 // N x r, orthonormal columns
};

struct EigenResult {
  std::vector<double> values;  // descending
  Matrix vectors;              // column i belongs to values[i]
};

/// Singular values below this fraction of the largest are treated as zero.
inline constexpr double kRankCutoff = 1e-10;

/// Plain product a * b; throws ContractError when a.cols() != b.rows().
Matrix matmul(const Matrix& a, const Matrix& b);

/// W * W^T for a wide s x N matrix (s <= N). O(s^2 N).
Matrix gram_small_side(const Matrix& w);

/// Sum of squared entries, i.e. Tr(W^T W).
double frobenius_sq(const Matrix& w);

/// Cyclic two-sided Jacobi eigendecomposition of a small symmetric matrix.
EigenResult symmetric_eigen(const Matrix& a);

/// Top-k right singular vectors of a wide s x N matrix.
///
/// Runs one-sided Jacobi on the s rows of W: every rotation is the Jacobi
/// rotation that diagonalises a 2x2 block of the Gram matrix W W^T, applied to
/// the rows themselves so that the rotated rows converge to U^T W = Sigma V^T.
/// The right vectors are then the rotated rows divided by their norms, which
/// is V = W^T U Sigma^-1 without ever squaring the condition number. Cost is
/// O(s^2 N) per sweep. Directions with sigma <= kRankCutoff * sigma_max are
/// dropped, so r = min(k, numerical rank) and r may be 0 for a zero matrix.
SvdResult truncated_svd(const Matrix& w, std::size_t k);

/// max |A^T A - I| over all entries; 0 for an empty matrix.
double orthonormality_error(const Matrix& a);

}  // namespace dkm
