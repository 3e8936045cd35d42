#pragma once

#include <cmath>
#include <random>

#include "dkm/linalg.hpp"
#include "dkm/matrix.hpp"

namespace dkm::test {

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(rows, cols);
  for (auto& v : m.data()) v = g(rng);
  return m;
}

/// N x r matrix with orthonormal columns (modified Gram-Schmidt on Gaussian columns).
inline Matrix random_orthonormal(std::size_t n, std::size_t r, std::mt19937_64& rng) {
  Matrix q = random_matrix(n, r, rng);
  for (std::size_t j = 0; j < r; ++j) {
    for (std::size_t p = 0; p < j; ++p) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += q(i, j) * q(i, p);
      for (std::size_t i = 0; i < n; ++i) q(i, j) -= dot * q(i, p);
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) norm += q(i, j) * q(i, j);
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < n; ++i) q(i, j) /= norm;
  }
  return q;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace dkm::test
