#include "hti/predictor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "hti/errors.hpp"
#include "hti/numerics.hpp"

namespace hti {

std::vector<std::size_t> mlp_widths(std::size_t latent_dim) {
  std::vector<std::size_t> widths{3 * latent_dim};
  for (int layer = 0; layer < 2; ++layer) widths.push_back((widths.back() + 1) / 2);
  widths.push_back(1);
  return widths;
}

PredictorParams register_predictor(ParamTape& tape, const PredictorDims& dims) {
  if (dims.num_users == 0 || dims.num_items == 0 || dims.latent_dim == 0) {
    throw std::invalid_argument("predictor dimensions must be positive");
  }
  PredictorParams ids;
  ids.user_factors = tape.add("pred.user_factors", {dims.num_users, dims.latent_dim});
  ids.item_factors = tape.add("pred.item_factors", {dims.num_items, dims.latent_dim});
  const auto widths = mlp_widths(dims.latent_dim);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::string prefix = "pred.mlp" + std::to_string(l);
    ids.weights.push_back(tape.add(prefix + ".w", {widths[l], widths[l + 1]}));
    ids.biases.push_back(tape.add(prefix + ".b", {widths[l + 1]}));
  }
  return ids;
}

Combined combine(const Vec& user_latent, const Vec& d_user, const Vec& item_latent, const Vec& d_item) {
  const auto k = user_latent.size();
  if (d_user.size() != k || item_latent.size() != k || d_item.size() != k) {
    throw std::invalid_argument("combine: latent factors and review representations differ in width");
  }
  Combined c;
  c.x = user_latent + d_user;
  c.y = item_latent + d_item;
  c.h0.resize(3 * k);
  c.h0 << c.x, c.y, c.x.cwiseProduct(c.y);
  return c;
}

std::pair<Vec, Vec> combine_backward(const Combined& c, const Vec& dh0) {
  const auto k = c.x.size();
  const Vec dprod = dh0.segment(2 * k, k);
  Vec dx = dh0.segment(0, k) + dprod.cwiseProduct(c.y);
  Vec dy = dh0.segment(k, k) + dprod.cwiseProduct(c.x);
  return {std::move(dx), std::move(dy)};
}

double predict(const Vec& h0, const ParamTape& params, const PredictorParams& ids, bool train, double dropout_rate,
               std::mt19937_64* rng, MlpTrace* trace) {
  Vec h = h0;
  const std::size_t layers = ids.weights.size();
  if (trace != nullptr) *trace = MlpTrace{};
  for (std::size_t l = 0; l < layers; ++l) {
    Vec pre = params.value(ids.weights[l]).matrix().transpose() * h + params.value(ids.biases[l]).vector();
    if (trace != nullptr) {
      trace->inputs.push_back(h);
      trace->pre.push_back(pre);
    }
    if (l + 1 == layers) {
      h = std::move(pre);
      break;
    }
    h = relu(pre);
    Vec mult = (train && rng != nullptr) ? dropout_multipliers(h.size(), dropout_rate, *rng) : Vec::Ones(h.size());
    h = h.cwiseProduct(mult);
    if (trace != nullptr) trace->dropout.push_back(std::move(mult));
  }
  const double out = h[0];
  if (trace != nullptr) trace->output = out;
  return out;
}

Vec predict_backward(const MlpTrace& trace, double doutput, const ParamTape& params, const PredictorParams& ids,
                     GradientSet& grads) {
  const std::size_t layers = ids.weights.size();
  Vec dpre = Vec::Constant(1, doutput);
  Vec dh;
  for (std::size_t l = layers; l-- > 0;) {
    grads[ids.weights[l]].matrix().noalias() += trace.inputs[l] * dpre.transpose();
    grads[ids.biases[l]].vector() += dpre;
    dh = params.value(ids.weights[l]).matrix() * dpre;
    if (l == 0) break;
    // Input of layer l is dropout(relu(pre[l-1])).
    dpre = relu_backward(trace.pre[l - 1], dh.cwiseProduct(trace.dropout[l - 1]));
  }
  return dh;
}

double l2_penalty(const ParamTape& params) {
  double total = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& v = params.value_at(i);
    const std::size_t first = params.frozen_count(i);
    for (std::size_t j = first; j < v.size(); ++j) total += v[j] * v[j];
  }
  return total;
}

void add_l2_gradient(const ParamTape& params, double lambda, GradientSet& grads) {
  if (lambda == 0.0) return;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& v = params.value_at(i);
    Tensor& g = grads.at(i);
    const std::size_t first = params.frozen_count(i);
    for (std::size_t j = first; j < v.size(); ++j) g[j] += 2.0 * lambda * v[j];
  }
}

double loss(std::span<const double> predictions, std::span<const double> targets, const ParamTape& params,
            double lambda) {
  if (lambda < 0.0) throw std::invalid_argument("regularization weight must be non-negative");
  if (predictions.size() != targets.size() || predictions.empty()) {
    throw std::invalid_argument("loss: predictions and targets must be non-empty and aligned");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (!std::isfinite(predictions[i])) {
      std::ostringstream msg;
      msg << "non-finite prediction at batch position " << i << " (target " << targets[i] << ")";
      throw NumericalError(msg.str());
    }
    const double r = targets[i] - predictions[i];
    sum += r * r;
  }
  const double data = sum / static_cast<double>(predictions.size());
  return lambda == 0.0 ? data : data + lambda * l2_penalty(params);
}

}  // namespace hti
