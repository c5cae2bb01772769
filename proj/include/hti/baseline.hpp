// Reference predictors: the global mean and a user/item bias model.

#pragma once

#include <vector>

#include "hti/corpus.hpp"
#include "hti/evaluator.hpp"

namespace hti {

struct BiasModel {
  double global_mean = 0.0;
  std::vector<double> user_bias;  // 0 for users without training ratings
  std::vector<double> item_bias;

  double predict(std::int32_t user, std::int32_t item) const;
};

// mu = mean training rating, b_u = mean(r - mu) over the user's training
// ratings, b_v = mean(r - mu - b_u) over the item's. Throws DataError when the
// training split is empty.
BiasModel fit_bias_model(const Corpus& corpus);
// A bias model with every bias zero.
BiasModel fit_global_mean(const Corpus& corpus);

MetricsReport evaluate_bias_model(const BiasModel& model, const Corpus& corpus, Split split);

// Fits the bias model on train and reports clipped test metrics.
MetricsReport fit_and_evaluate(const Corpus& corpus);

}  // namespace hti
