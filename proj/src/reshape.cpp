#include "dkm/reshape.hpp"

#include "dkm/error.hpp"

namespace dkm {

// With OIHW storage each filter row is already contiguous, so column j of W is
// data[j*s .. j*s + s).
Matrix reshape_rows(const Tensor4& layer) {
  const auto& d = layer.dims();
  require(d.s1 == d.s2, "reshape_rows: filters must be square");
  const std::size_t s = d.s2, n = d.s1 * d.c * d.m;
  Matrix w(s, n);
  const auto src = layer.data();
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < s; ++i) w(i, j) = src[j * s + i];
  return w;
}

Tensor4 unreshape_rows(const Matrix& w, const FilterDims& dims) {
  require(dims.s1 == dims.s2, "unreshape_rows: filters must be square");
  const std::size_t s = dims.s2, n = dims.s1 * dims.c * dims.m;
  require(w.rows() == s && w.cols() == n, "unreshape_rows: matrix is not s x (s*c*m)");
  Tensor4 t(dims);
  auto dst = t.data();
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < s; ++i) dst[j * s + i] = w(i, j);
  return t;
}

}  // namespace dkm
