#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace dkm {

/// Dense row-major matrix of doubles. Constructors reject non-finite entries.
class Matrix {
 public:
  Matrix() = default;
  /// Zero-filled rows x cols matrix.
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data_).subspan(i * cols_, cols_);
  }
  std::span<double> row(std::size_t i) { return std::span<double>(data_).subspan(i * cols_, cols_); }

  Matrix transpose() const;
  std::vector<double> column(std::size_t j) const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Shape of a convolution weight tensor: s1 x s2 filters, c inputs, m outputs.
struct FilterDims {
  std::size_t s1 = 0;
  std::size_t s2 = 0;
  std::size_t c = 0;
  std::size_t m = 0;

  std::size_t count() const noexcept { return s1 * s2 * c * m; }
  friend bool operator==(const FilterDims&, const FilterDims&) = default;
};

/// Convolution weights stored output-channel major: data[((m*c + ci)*s1 + row)*s2 + col].
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(FilterDims dims);
  Tensor4(FilterDims dims, std::vector<double> data);

  const FilterDims& dims() const noexcept { return dims_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  double operator()(std::size_t out, std::size_t in, std::size_t r, std::size_t col) const {
    return data_[((out * dims_.c + in) * dims_.s1 + r) * dims_.s2 + col];
  }
  double& operator()(std::size_t out, std::size_t in, std::size_t r, std::size_t col) {
    return data_[((out * dims_.c + in) * dims_.s1 + r) * dims_.s2 + col];
  }

  friend bool operator==(const Tensor4&, const Tensor4&) = default;

 private:
  FilterDims dims_;
  std::vector<double> data_;
};

bool all_finite(std::span<const double> values) noexcept;

}  // namespace dkm
