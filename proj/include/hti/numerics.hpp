// Differentiable primitives with hand-derived backward passes, plus the
// central-difference gradient checker that validates them.

#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "hti/tensor.hpp"

namespace hti {

// Softmax restricted to unmasked entries. Masked entries are exactly 0; an
// all-masked input yields all zeros.
std::vector<double> masked_softmax(std::span<const double> scores, std::span<const std::uint8_t> mask);

// Gradient w.r.t. the scores given the softmax output and the output gradient.
std::vector<double> masked_softmax_backward(std::span<const double> probs,
                                            std::span<const double> dprobs,
                                            std::span<const std::uint8_t> mask);

// Kernel width of a filter bank laid out as d_out x (width * d_in), tap-major.
// Throws std::invalid_argument for even or inconsistent widths.
std::size_t kernel_width(const Tensor& filters, std::size_t d_in);

struct ConvResult {
  MatrixRM pre;  // p x d_out, before relu
  MatrixRM out;  // relu(pre)
};

// "Same" 1-D convolution over a p x d_in sequence: the input is zero padded
// by (s-1)/2 on both sides so output position i is centred on input i.
// Each filter row holds s consecutive d_in-wide taps.
ConvResult conv1d_same(const MatrixRM& sequence, const Tensor& filters, const Tensor& bias);

// Accumulates filter/bias gradients and, when `dsequence` is non-null, the
// gradient w.r.t. the input sequence (also accumulated).
void conv1d_same_backward(const MatrixRM& sequence, const Tensor& filters, const MatrixRM& dpre,
                          MatrixRM* dsequence, Tensor& dfilters, Tensor& dbias);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Vec sigmoid(const Vec& x) {
  return x.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

inline Vec relu(const Vec& x) { return x.cwiseMax(0.0); }

// Zeroes gradient where the relu input was not positive.
inline Vec relu_backward(const Vec& pre, const Vec& dout) {
  return (pre.array() > 0.0).select(dout, Vec::Zero(dout.size()));
}

// Weighted sum of rows: sum_i weights[i] * rows.row(i).
Vec weighted_row_sum(const MatrixRM& rows, std::span<const double> weights);

// Inverted dropout: kept units are scaled by 1/(1-rate) so that inference
// needs no rescaling. Returns per-unit multipliers (0 or 1/(1-rate)).
Vec dropout_multipliers(Eigen::Index size, double rate, std::mt19937_64& rng);

struct GradCheckOptions {
  double eps = 1e-5;
  // 0 checks every coordinate; otherwise at most this many per parameter.
  std::size_t max_coords_per_param = 0;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates_checked = 0;
};

// Computes the loss; when `with_grad` is true it must also accumulate the
// analytic gradient into params.grads() (which the checker zeroes first).
using LossFn = std::function<double(ParamTape& params, bool with_grad)>;

// Compares analytic gradients with central differences. The per-coordinate
// error is |analytic - numeric| / max(1, |analytic|, |numeric|). Frozen rows
// are skipped. Throws NumericalError on a non-finite loss.
GradCheckResult grad_check(const LossFn& loss_fn, ParamTape& params, const GradCheckOptions& options = {});

}  // namespace hti
