#include "dkm/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dkm/error.hpp"
#include "dkm/kernels.hpp"

namespace dkm {

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul: dimension mismatch " + std::to_string(a.rows()) + "x" +
                                    std::to_string(a.cols()) + " * " + std::to_string(b.rows()) +
                                    "x" + std::to_string(b.cols()));
  Matrix c(a.rows(), b.cols());
  kernels::parallel::gemm(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
  return c;
}

Matrix gram_small_side(const Matrix& w) {
  require(w.rows() <= w.cols(), "gram_small_side: expected a wide matrix (s <= N)");
  const std::size_t s = w.rows();
  Matrix g(s, s);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = i; j < s; ++j) {
      const auto ri = w.row(i), rj = w.row(j);
      const double v = std::inner_product(ri.begin(), ri.end(), rj.begin(), 0.0);
      g(i, j) = v;
      g(j, i) = v;
    }
  return g;
}

double frobenius_sq(const Matrix& w) {
  double acc = 0.0;
  for (double v : w.data()) acc += v * v;
  return acc;
}

EigenResult symmetric_eigen(const Matrix& a) {
  require(a.rows() == a.cols(), "symmetric_eigen: matrix is not square");
  const std::size_t n = a.rows();
  Matrix m = a;
  Matrix v = Matrix::identity(n);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0, diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      diag += m(i, i) * m(i, i);
      for (std::size_t j = i + 1; j < n; ++j) off += m(i, j) * m(i, j);
    }
    if (off <= 1e-30 * diag || off == 0.0) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (m(p, q) == 0.0) continue;
        const double theta = (m(q, q) - m(p, p)) / (2.0 * m(p, q));
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::hypot(1.0, theta));
        const double c = 1.0 / std::hypot(1.0, t);
        const double sn = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double mkp = m(k, p), mkq = m(k, q);
          m(k, p) = c * mkp - sn * mkq;
          m(k, q) = sn * mkp + c * mkq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double mpk = m(p, k), mqk = m(q, k);
          m(p, k) = c * mpk - sn * mqk;
          m(q, k) = sn * mpk + c * mqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return m(x, x) > m(y, y); });
  EigenResult out{std::vector<double>(n), Matrix(n, n)};
  for (std::size_t i = 0; i < n; ++i) {
    out.values[i] = m(order[i], order[i]);
    for (std::size_t k = 0; k < n; ++k) out.vectors(k, i) = v(k, order[i]);
  }
  return out;
}

SvdResult truncated_svd(const Matrix& w, std::size_t k) {
  require(k >= 1, "truncated_svd: k must be >= 1");
  const std::size_t s = w.rows(), n = w.cols();
  Matrix rows = w;  // rotated in place towards Sigma V^T

  constexpr double kOrthTol = 1e-14;
  for (int sweep = 0; sweep < 60; ++sweep) {
    bool rotated = false;
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = i + 1; j < s; ++j) {
        auto ri = rows.row(i), rj = rows.row(j);
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
          alpha += ri[c] * ri[c];
          beta += rj[c] * rj[c];
          gamma += ri[c] * rj[c];
        }
        if (gamma == 0.0 || std::abs(gamma) <= kOrthTol * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
        const double cs = 1.0 / std::hypot(1.0, t);
        const double sn = cs * t;
        for (std::size_t c = 0; c < n; ++c) {
          const double a = ri[c], b = rj[c];
          ri[c] = cs * a - sn * b;
          rj[c] = sn * a + cs * b;
        }
      }
    if (!rotated) break;
  }

  std::vector<double> norms(s);
  for (std::size_t i = 0; i < s; ++i) {
    const auto r = rows.row(i);
    norms[i] = std::sqrt(std::inner_product(r.begin(), r.end(), r.begin(), 0.0));
  }
  std::vector<std::size_t> order(s);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

  const double sigma_max = s ? norms[order[0]] : 0.0;
  std::size_t r = 0;
  while (r < std::min(k, s) && sigma_max > 0.0 && norms[order[r]] > kRankCutoff * sigma_max) ++r;

  SvdResult out{std::vector<double>(r), Matrix(n, r)};
  for (std::size_t i = 0; i < r; ++i) {
    const double sigma = norms[order[i]];
    out.singular_values[i] = sigma;
    const auto src = rows.row(order[i]);
    for (std::size_t c = 0; c < n; ++c) out.right_vectors(c, i) = src[c] / sigma;
  }
  return out;
}

double orthonormality_error(const Matrix& a) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.cols(); ++i)
    for (std::size_t j = i; j < a.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t r = 0; r < a.rows(); ++r) acc += a(r, i) * a(r, j);
      worst = std::max(worst, std::abs(acc - (i == j ? 1.0 : 0.0)));
    }
  return worst;
}

}  // namespace dkm
