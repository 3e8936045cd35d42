#pragma once

#include "dkm/matrix.hpp"

namespace dkm {

/// Row-wise view of a square-filter conv layer as an s x N matrix, N = s*c*m.
/// Column j is one horizontal filter row; columns are ordered output channel
/// (outer), input channel, filter row (inner), i.e. j = (m*c + ci)*s + row.
Matrix reshape_rows(const Tensor4& layer);

/// Exact inverse of reshape_rows.
Tensor4 unreshape_rows(const Matrix& w, const FilterDims& dims);

}  // namespace dkm
