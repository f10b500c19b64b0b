#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>

#include "dkm/matrix.hpp"

namespace dkm {

/// Fully connected layer `out = x * weight + bias` with explicit gradient
/// buffers. Gradients accumulate across backward calls until zero_grad().
struct AffineLayer {
  Matrix weight;       // in x out
  Matrix bias;         // 1 x out
  Matrix grad_weight;  // same shape as weight
  Matrix grad_bias;    // same shape as bias

  AffineLayer() = default;
  AffineLayer(std::size_t in_dim, std::size_t out_dim);

  // Weights from N(0, stddev^2), zero bias.
  static AffineLayer random(std::size_t in_dim, std::size_t out_dim, double stddev, std::mt19937_64& rng);

  std::size_t in_dim() const noexcept { return weight.rows(); }
  std::size_t out_dim() const noexcept { return weight.cols(); }
  void zero_grad();
};

Matrix affine_forward(const Matrix& x, const AffineLayer& layer);

// Accumulates x^T * grad_out into grad_weight and the column sums of grad_out
// into grad_bias; returns grad_out * weight^T, or an empty matrix when
// want_grad_input is false.
Matrix affine_backward(const Matrix& x, AffineLayer& layer, const Matrix& grad_out, bool want_grad_input = true);

Matrix relu_forward(const Matrix& x);
// Passes grad_out where x > 0, zero elsewhere.
Matrix relu_backward(const Matrix& x, const Matrix& grad_out);

struct XentResult {
  double loss = 0.0;
  Matrix grad_logits;
};

/// Mean two-class softmax cross-entropy. labels[n] must be 0 or 1; the
/// returned gradient is already divided by N.
XentResult softmax_xent(const Matrix& logits, std::span<const std::uint8_t> labels);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_row = 0;
  std::size_t worst_col = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Scalar function of a parameter matrix. When `grad` is non-null the
/// function must also write the analytic gradient (same shape as the
/// argument) into it.
using ScalarFunction = std::function<double(const Matrix& at, Matrix* grad)>;

/// Compares the analytic gradient of f at `at` with central differences
/// (f(w + eps e) - f(w - eps e)) / 2 eps, entry by entry. Relative error uses
/// the denominator max(|analytic|, |numeric|, 1e-8).
GradCheckReport grad_check(const ScalarFunction& f, const Matrix& at, double epsilon = 1e-4);

double relative_error(double analytic, double numeric) noexcept;

}  // namespace dkm
