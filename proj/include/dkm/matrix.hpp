#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace dkm {

/// Dense row-major matrix of doubles. Every numeric quantity in the library
/// (activations, parameters, gradients, optimizer state) lives in one.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix from_data(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  void fill(double v);
  bool same_shape(const Matrix& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const noexcept;

  // "RxC", used in error messages.
  std::string shape_string() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// a (N x M) * b (M x P)
Matrix matmul(const Matrix& a, const Matrix& b);
// a^T * b, with a (M x N) and b (M x P)
Matrix matmul_tn(const Matrix& a, const Matrix& b);
// a * b^T, with a (N x M) and b (P x M)
Matrix matmul_nt(const Matrix& a, const Matrix& b);

// Rows of m selected by index, in the given order.
Matrix gather_rows(const Matrix& m, std::span<const std::size_t> indices);

double squared_distance(std::span<const double> a, std::span<const double> b) noexcept;

// Throws dimension_error naming both shapes unless a and b have equal shape.
void require_same_shape(const Matrix& a, const Matrix& b, const char* what);

}  // namespace dkm
