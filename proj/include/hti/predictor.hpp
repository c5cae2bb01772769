// Prediction head: latent factors plus aggregated review representations fed
// through an MLP with a linear output, and the regularized square loss.

#pragma once

#include <random>
#include <span>
#include <vector>

#include "hti/tensor.hpp"

namespace hti {

struct PredictorDims {
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t latent_dim = 32;
};

struct PredictorParams {
  ParamId user_factors;  // M x k
  ParamId item_factors;  // N x k
  std::vector<ParamId> weights;  // layer l: in x out, applied as W^T h
  std::vector<ParamId> biases;
};

// Layer widths: 3k, then two hidden layers each ceil(previous / 2), then 1.
std::vector<std::size_t> mlp_widths(std::size_t latent_dim);

PredictorParams register_predictor(ParamTape& tape, const PredictorDims& dims);

struct Combined {
  Vec x;   // u + d_i
  Vec y;   // v + d_j
  Vec h0;  // [x; y; x * y]
};

// Throws std::invalid_argument when the four widths disagree.
Combined combine(const Vec& user_latent, const Vec& d_user, const Vec& item_latent, const Vec& d_item);

// Returns (dx, dy); the gradient w.r.t. u and d_i is dx, w.r.t. v and d_j is dy.
std::pair<Vec, Vec> combine_backward(const Combined& c, const Vec& dh0);

struct MlpTrace {
  std::vector<Vec> inputs;   // input of each layer
  std::vector<Vec> pre;      // pre-activation of each layer
  std::vector<Vec> dropout;  // per hidden layer multipliers (ones in eval mode)
  double output = 0.0;
};

// Hidden layers apply relu then inverted dropout (train mode only); the last
// layer is affine with no activation.
double predict(const Vec& h0, const ParamTape& params, const PredictorParams& ids, bool train, double dropout_rate,
               std::mt19937_64* rng, MlpTrace* trace = nullptr);

// Accumulates MLP parameter gradients and returns d(h0).
Vec predict_backward(const MlpTrace& trace, double doutput, const ParamTape& params, const PredictorParams& ids,
                     GradientSet& grads);

// Sum of squares of every learnable entry (frozen rows excluded).
double l2_penalty(const ParamTape& params);
// grads += 2 * lambda * theta over learnable entries.
void add_l2_gradient(const ParamTape& params, double lambda, GradientSet& grads);

// mean((r - r_hat)^2) + lambda * ||theta||^2. Throws NumericalError if a
// prediction is not finite, std::invalid_argument for lambda < 0.
double loss(std::span<const double> predictions, std::span<const double> targets, const ParamTape& params,
            double lambda);

}  // namespace hti
