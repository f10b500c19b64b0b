#include "dkm/diffmath.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dkm/errors.hpp"

namespace dkm {

AffineLayer::AffineLayer(std::size_t in_dim, std::size_t out_dim)
    : weight(in_dim, out_dim),
      bias(1, out_dim),
      grad_weight(in_dim, out_dim),
      grad_bias(1, out_dim) {}

AffineLayer AffineLayer::random(std::size_t in_dim, std::size_t out_dim, double stddev,
                                std::mt19937_64& rng) {
  AffineLayer layer(in_dim, out_dim);
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& w : layer.weight.values()) w = dist(rng);
  return layer;
}

void AffineLayer::zero_grad() {
  grad_weight.fill(0.0);
  grad_bias.fill(0.0);
}

Matrix affine_forward(const Matrix& x, const AffineLayer& layer) {
  if (x.cols() != layer.weight.rows()) {
    throw dimension_error("affine_forward: input " + x.shape_string() + " incompatible with weight " +
                          layer.weight.shape_string());
  }
  Matrix out = matmul(x, layer.weight);
  auto b = layer.bias.row(0);
  for (std::size_t n = 0; n < out.rows(); ++n) {
    auto r = out.row(n);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += b[j];
  }
  return out;
}

Matrix affine_backward(const Matrix& x, AffineLayer& layer, const Matrix& grad_out, bool want_grad_input) {
  if (x.cols() != layer.weight.rows() || grad_out.cols() != layer.weight.cols() ||
      grad_out.rows() != x.rows()) {
    throw dimension_error("affine_backward: input " + x.shape_string() + ", grad_out " +
                          grad_out.shape_string() + " incompatible with weight " +
                          layer.weight.shape_string());
  }
  Matrix gw = matmul_tn(x, grad_out);
  auto dst = layer.grad_weight.values();
  auto src = gw.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];

  auto gb = layer.grad_bias.row(0);
  for (std::size_t n = 0; n < grad_out.rows(); ++n) {
    auto r = grad_out.row(n);
    for (std::size_t j = 0; j < r.size(); ++j) gb[j] += r[j];
  }
  if (!want_grad_input) return {};
  return matmul_nt(grad_out, layer.weight);
}

Matrix relu_forward(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.values()) v = std::max(v, 0.0);
  return out;
}

Matrix relu_backward(const Matrix& x, const Matrix& grad_out) {
  require_same_shape(x, grad_out, "relu_backward");
  Matrix out = grad_out;
  auto xv = x.values();
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    if (xv[i] <= 0.0) ov[i] = 0.0;
  }
  return out;
}

XentResult softmax_xent(const Matrix& logits, std::span<const std::uint8_t> labels) {
  if (logits.rows() == 0) throw precondition_error("softmax_xent: empty batch");
  if (logits.cols() != 2) {
    throw dimension_error("softmax_xent: expected Nx2 logits, got " + logits.shape_string());
  }
  if (labels.size() != logits.rows()) {
    throw dimension_error("softmax_xent: " + std::to_string(labels.size()) + " labels for " +
                          logits.shape_string() + " logits");
  }
  const std::size_t n_rows = logits.rows();
  const double inv_n = 1.0 / static_cast<double>(n_rows);
  XentResult result{0.0, Matrix(n_rows, 2)};
  for (std::size_t n = 0; n < n_rows; ++n) {
    const std::uint8_t label = labels[n];
    if (label > 1) throw precondition_error("softmax_xent: label must be 0 or 1");
    const double m = std::max(logits(n, 0), logits(n, 1));
    const double e0 = std::exp(logits(n, 0) - m);
    const double e1 = std::exp(logits(n, 1) - m);
    const double log_z = m + std::log(e0 + e1);
    result.loss += log_z - logits(n, label);
    const double p0 = e0 / (e0 + e1);
    const double p1 = e1 / (e0 + e1);
    result.grad_logits(n, 0) = (p0 - (label == 0 ? 1.0 : 0.0)) * inv_n;
    result.grad_logits(n, 1) = (p1 - (label == 1 ? 1.0 : 0.0)) * inv_n;
  }
  result.loss *= inv_n;
  return result;
}

double relative_error(double analytic, double numeric) noexcept {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport grad_check(const ScalarFunction& f, const Matrix& at, double epsilon) {
  if (!(epsilon > 0.0)) throw precondition_error("grad_check: epsilon must be positive");
  Matrix analytic(at.rows(), at.cols());
  const double base = f(at, &analytic);
  if (!std::isfinite(base)) throw numeric_error("grad_check: function is not finite at base point");
  if (!analytic.same_shape(at)) {
    throw dimension_error("grad_check: analytic gradient " + analytic.shape_string() +
                          " does not match parameter " + at.shape_string());
  }

  GradCheckReport report;
  Matrix probe = at;
  for (std::size_t r = 0; r < at.rows(); ++r) {
    for (std::size_t c = 0; c < at.cols(); ++c) {
      const double original = at(r, c);
      probe(r, c) = original + epsilon;
      const double plus = f(probe, nullptr);
      probe(r, c) = original - epsilon;
      const double minus = f(probe, nullptr);
      probe(r, c) = original;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw numeric_error("grad_check: non-finite value at perturbed entry (" + std::to_string(r) +
                            ", " + std::to_string(c) + ")");
      }
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double err = relative_error(analytic(r, c), numeric);
      if (err > report.max_rel_error || (r == 0 && c == 0)) {
        report = {err, r, c, analytic(r, c), numeric};
      }
    }
  }
  return report;
}

}  // namespace dkm
