#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "dkm/error.hpp"
#include "dkm/linalg.hpp"
#include "test_util.hpp"

using namespace dkm;

TEST(Matrix, RejectsNonFiniteAndBadLength) {
  EXPECT_THROW(Matrix(1, 2, {1.0, std::numeric_limits<double>::quiet_NaN()}), ContractError);
  EXPECT_THROW(Matrix(1, 2, {1.0, std::numeric_limits<double>::infinity()}), ContractError);
  EXPECT_THROW(Matrix(2, 2, {1.0, 2.0, 3.0}), ContractError);
}

TEST(Matmul, IdentityTimesIdentity) { EXPECT_EQ(matmul(Matrix::identity(2), Matrix::identity(2)), Matrix::identity(2)); }

TEST(Matmul, HandExample) {
  const auto c = matmul(Matrix::from_rows({{1, 2}, {3, 4}}), Matrix::from_rows({{5}, {6}}));
  EXPECT_EQ(c, Matrix::from_rows({{17}, {39}}));
}

TEST(Matmul, DimensionMismatchThrows) {
  EXPECT_THROW(matmul(Matrix(2, 3), Matrix(2, 2)), ContractError);
}

TEST(Matmul, Associative) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const auto a = test::random_matrix(4, 5, rng), b = test::random_matrix(5, 3, rng), c = test::random_matrix(3, 6, rng);
    const auto l = matmul(matmul(a, b), c), r = matmul(a, matmul(b, c));
    const double scale = std::sqrt(frobenius_sq(l));
    EXPECT_LE(test::max_abs_diff(l.data(), r.data()), 1e-10 * scale);
  }
}

TEST(Gram, Identity) { EXPECT_EQ(gram_small_side(Matrix::identity(2)), Matrix::identity(2)); }

TEST(Gram, HandExample) {
  EXPECT_EQ(gram_small_side(Matrix::from_rows({{1, 1, 0}, {0, 0, 2}})), Matrix::from_rows({{2, 0}, {0, 4}}));
}

TEST(Gram, SymmetricForRandomWide) {
  std::mt19937_64 rng(2);
  const auto g = gram_small_side(test::random_matrix(3, 10, rng));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(g(i, j), g(j, i), 1e-12);
}

TEST(Gram, TallInputRejected) { EXPECT_THROW(gram_small_side(Matrix(3, 2)), ContractError); }

TEST(Frobenius, Examples) {
  EXPECT_EQ(frobenius_sq(Matrix(3, 4)), 0.0);
  EXPECT_EQ(frobenius_sq(Matrix::from_rows({{1, 2}, {3, 4}})), 30.0);
}

TEST(Frobenius, EqualsGramTrace) {
  std::mt19937_64 rng(3);
  const auto w = test::random_matrix(5, 40, rng);
  const auto g = gram_small_side(w);
  double tr = 0.0;
  for (std::size_t i = 0; i < 5; ++i) tr += g(i, i);
  EXPECT_NEAR(frobenius_sq(w), tr, 1e-10 * tr);
}

TEST(TruncatedSvd, DiagonalExample) {
  const auto r = truncated_svd(Matrix::from_rows({{3, 0}, {0, 1}}), 1);
  ASSERT_EQ(r.singular_values.size(), 1u);
  EXPECT_NEAR(r.singular_values[0], 3.0, 1e-12);
  EXPECT_NEAR(std::abs(r.right_vectors(0, 0)), 1.0, 1e-12);
  EXPECT_NEAR(r.right_vectors(1, 0), 0.0, 1e-12);
}

TEST(TruncatedSvd, EqualColumnsGiveAllOnesVector) {
  const std::size_t n = 7;
  Matrix w(3, n);
  for (std::size_t j = 0; j < n; ++j) {
    w(0, j) = 1.0;
    w(1, j) = -2.0;
    w(2, j) = 0.5;
  }
  const auto r = truncated_svd(w, 1);
  ASSERT_EQ(r.singular_values.size(), 1u);
  EXPECT_NEAR(r.singular_values[0], std::sqrt(frobenius_sq(w)), 1e-12);
  for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(std::abs(r.right_vectors(j, 0)), 1.0 / std::sqrt(double(n)), 1e-12);
  // Rank 1: asking for more vectors still returns one.
  EXPECT_EQ(truncated_svd(w, 3).singular_values.size(), 1u);
}

TEST(TruncatedSvd, EnergyAndOrthonormality) {
  std::mt19937_64 rng(4);
  for (std::size_t s : {1, 2, 3, 5}) {
    const auto w = test::random_matrix(s, 30, rng);
    const auto r = truncated_svd(w, s + 2);
    ASSERT_EQ(r.singular_values.size(), s);
    double e = 0.0;
    for (double v : r.singular_values) e += v * v;
    EXPECT_NEAR(e, frobenius_sq(w), 1e-8 * frobenius_sq(w));
    EXPECT_LE(orthonormality_error(r.right_vectors), 1e-8);
    for (std::size_t i = 1; i < s; ++i) EXPECT_GE(r.singular_values[i - 1], r.singular_values[i]);
  }
}

TEST(TruncatedSvd, MatchesGramEigendecomposition) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    const auto w = test::random_matrix(5, 25, rng);
    const auto eig = symmetric_eigen(gram_small_side(w));
    const auto svd = truncated_svd(w, 5);
    for (std::size_t i = 0; i < 5; ++i)
      EXPECT_NEAR(svd.singular_values[i] * svd.singular_values[i], eig.values[i], 1e-9 * eig.values[0]);
    // W v_i = sigma_i u_i, so |u_i . W v_i| = sigma_i.
    const auto wv = matmul(w, svd.right_vectors);
    for (std::size_t i = 0; i < 5; ++i) {
      double dot = 0.0;
      for (std::size_t a = 0; a < 5; ++a) dot += eig.vectors(a, i) * wv(a, i);
      EXPECT_NEAR(std::abs(dot), svd.singular_values[i], 1e-8 * svd.singular_values[0]);
    }
  }
}

TEST(TruncatedSvd, RankDeficientDropsNullDirections) {
  std::mt19937_64 rng(6);
  // Row 2 = row 0 + row 1: rank 2 out of 3.
  auto w = test::random_matrix(3, 20, rng);
  for (std::size_t j = 0; j < 20; ++j) w(2, j) = w(0, j) + w(1, j);
  const auto r = truncated_svd(w, 3);
  EXPECT_EQ(r.singular_values.size(), 2u);
  EXPECT_LE(orthonormality_error(r.right_vectors), 1e-8);
}

TEST(TruncatedSvd, ZeroMatrixAndZeroK) {
  EXPECT_EQ(truncated_svd(Matrix(3, 5), 2).singular_values.size(), 0u);
  EXPECT_THROW(truncated_svd(Matrix::identity(2), 0), ContractError);
}

TEST(SymmetricEigen, ReconstructsInput) {
  std::mt19937_64 rng(7);
  const auto a = gram_small_side(test::random_matrix(4, 9, rng));
  const auto e = symmetric_eigen(a);
  Matrix rec(4, 4);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t k = 0; k < 4; ++k) rec(i, j) += e.vectors(i, k) * e.values[k] * e.vectors(j, k);
  EXPECT_LE(test::max_abs_diff(rec.data(), a.data()), 1e-10 * e.values[0]);
}
