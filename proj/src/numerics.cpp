#include "hti/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "hti/errors.hpp"

namespace hti {

std::vector<double> masked_softmax(std::span<const double> scores, std::span<const std::uint8_t> mask) {
  std::vector<double> probs(scores.size(), 0.0);
  double max_score = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (mask[i]) max_score = std::max(max_score, scores[i]);
  }
  if (max_score == -std::numeric_limits<double>::infinity()) return probs;
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!mask[i]) continue;
    probs[i] = std::exp(scores[i] - max_score);
    total += probs[i];
  }
  for (double& p : probs) p /= total;
  return probs;
}

std::vector<double> masked_softmax_backward(std::span<const double> probs,
                                            std::span<const double> dprobs,
                                            std::span<const std::uint8_t> mask) {
  double dot = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (mask[i]) dot += probs[i] * dprobs[i];
  }
  std::vector<double> dscores(probs.size(), 0.0);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (mask[i]) dscores[i] = probs[i] * (dprobs[i] - dot);
  }
  return dscores;
}

std::size_t kernel_width(const Tensor& filters, std::size_t d_in) {
  if (d_in == 0 || filters.cols() % d_in != 0) {
    throw std::invalid_argument("filter bank width is not a multiple of the input width");
  }
  const std::size_t width = filters.cols() / d_in;
  if (width % 2 == 0) throw std::invalid_argument("convolution kernel width must be odd");
  return width;
}

namespace {

// Rows of the unfolded input: row i holds taps i-half .. i+half, zero outside.
MatrixRM unfold(const MatrixRM& sequence, std::size_t width) {
  const Eigen::Index p = sequence.rows();
  const Eigen::Index d = sequence.cols();
  const Eigen::Index half = static_cast<Eigen::Index>(width / 2);
  MatrixRM cols = MatrixRM::Zero(p, static_cast<Eigen::Index>(width) * d);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index t = 0; t < static_cast<Eigen::Index>(width); ++t) {
      const Eigen::Index src = i + t - half;
      if (src < 0 || src >= p) continue;
      cols.block(i, t * d, 1, d) = sequence.row(src);
    }
  }
  return cols;
}

}  // namespace

ConvResult conv1d_same(const MatrixRM& sequence, const Tensor& filters, const Tensor& bias) {
  const std::size_t width = kernel_width(filters, static_cast<std::size_t>(sequence.cols()));
  const MatrixRM cols = unfold(sequence, width);
  ConvResult result;
  result.pre = cols * filters.matrix().transpose();
  result.pre.rowwise() += bias.vector().transpose();
  result.out = result.pre.cwiseMax(0.0);
  return result;
}

void conv1d_same_backward(const MatrixRM& sequence, const Tensor& filters, const MatrixRM& dpre,
                          MatrixRM* dsequence, Tensor& dfilters, Tensor& dbias) {
  const std::size_t width = kernel_width(filters, static_cast<std::size_t>(sequence.cols()));
  const MatrixRM cols = unfold(sequence, width);
  dfilters.matrix().noalias() += dpre.transpose() * cols;
  dbias.vector() += dpre.colwise().sum().transpose();
  if (dsequence == nullptr) return;
  const MatrixRM dcols = dpre * filters.matrix();
  const Eigen::Index p = sequence.rows();
  const Eigen::Index d = sequence.cols();
  const Eigen::Index half = static_cast<Eigen::Index>(width / 2);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index t = 0; t < static_cast<Eigen::Index>(width); ++t) {
      const Eigen::Index dst = i + t - half;
      if (dst < 0 || dst >= p) continue;
      dsequence->row(dst) += dcols.block(i, t * d, 1, d);
    }
  }
}

Vec weighted_row_sum(const MatrixRM& rows, std::span<const double> weights) {
  Vec out = Vec::Zero(rows.cols());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const double w = weights[static_cast<std::size_t>(i)];
    if (w != 0.0) out += w * rows.row(i).transpose();
  }
  return out;
}

Vec dropout_multipliers(Eigen::Index size, double rate, std::mt19937_64& rng) {
  Vec mult = Vec::Ones(size);
  if (rate <= 0.0) return mult;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index i = 0; i < size; ++i) mult[i] = unit(rng) < rate ? 0.0 : keep_scale;
  return mult;
}

GradCheckResult grad_check(const LossFn& loss_fn, ParamTape& params, const GradCheckOptions& options) {
  params.zero_grad();
  const double base = loss_fn(params, true);
  if (!std::isfinite(base)) throw NumericalError("grad_check: loss is not finite");
  const GradientSet analytic = params.grads();

  GradCheckResult result;
  std::mt19937_64 rng(options.seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& value = params.value_at(pi);
    const std::size_t first = params.frozen_count(pi);
    std::vector<std::size_t> coords(value.size() - first);
    std::iota(coords.begin(), coords.end(), first);
    if (options.max_coords_per_param > 0 && coords.size() > options.max_coords_per_param) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    for (const std::size_t c : coords) {
      const double saved = value[c];
      value[c] = saved + options.eps;
      const double plus = loss_fn(params, false);
      value[c] = saved - options.eps;
      const double minus = loss_fn(params, false);
      value[c] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw NumericalError("grad_check: perturbed loss is not finite at " + params.name(pi));
      }
      const double numeric = (plus - minus) / (2.0 * options.eps);
      const double a = analytic.at(pi)[c];
      const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      ++result.coordinates_checked;
      if (result.coordinates_checked == 1 || err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_param = params.name(pi);
        result.worst_index = c;
        result.worst_analytic = a;
        result.worst_numeric = numeric;
      }
    }
  }
  params.grads() = analytic;
  return result;
}

}  // namespace hti
