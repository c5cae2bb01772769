#include "hti/baseline.hpp"

#include "hti/errors.hpp"

namespace hti {

double BiasModel::predict(std::int32_t user, std::int32_t item) const {
  double r = global_mean;
  if (user >= 0 && static_cast<std::size_t>(user) < user_bias.size()) r += user_bias[user];
  if (item >= 0 && static_cast<std::size_t>(item) < item_bias.size()) r += item_bias[item];
  return r;
}

BiasModel fit_global_mean(const Corpus& corpus) {
  const auto train = corpus.split_indices(Split::train);
  if (train.empty()) throw DataError("training split is empty");
  BiasModel model;
  for (const auto i : train) model.global_mean += corpus.interactions[i].rating;
  model.global_mean /= static_cast<double>(train.size());
  model.user_bias.assign(corpus.num_users(), 0.0);
  model.item_bias.assign(corpus.num_items(), 0.0);
  return model;
}

BiasModel fit_bias_model(const Corpus& corpus) {
  BiasModel model = fit_global_mean(corpus);
  const auto train = corpus.split_indices(Split::train);
  std::vector<double> sum(corpus.num_users(), 0.0);
  std::vector<std::size_t> count(corpus.num_users(), 0);
  for (const auto i : train) {
    const Interaction& it = corpus.interactions[i];
    sum[it.user] += it.rating - model.global_mean;
    ++count[it.user];
  }
  for (std::size_t u = 0; u < sum.size(); ++u) {
    if (count[u] > 0) model.user_bias[u] = sum[u] / static_cast<double>(count[u]);
  }
  sum.assign(corpus.num_items(), 0.0);
  count.assign(corpus.num_items(), 0);
  for (const auto i : train) {
    const Interaction& it = corpus.interactions[i];
    sum[it.item] += it.rating - model.global_mean - model.user_bias[it.user];
    ++count[it.item];
  }
  for (std::size_t v = 0; v < sum.size(); ++v) {
    if (count[v] > 0) model.item_bias[v] = sum[v] / static_cast<double>(count[v]);
  }
  return model;
}

MetricsReport evaluate_bias_model(const BiasModel& model, const Corpus& corpus, Split split) {
  std::vector<double> preds;
  std::vector<double> targets;
  for (const auto i : corpus.split_indices(split)) {
    const Interaction& it = corpus.interactions[i];
    preds.push_back(model.predict(it.user, it.item));
    targets.push_back(it.rating);
  }
  MetricsReport report = compute_metrics(preds, targets);
  report.label = "bias";
  return report;
}

MetricsReport fit_and_evaluate(const Corpus& corpus) {
  return evaluate_bias_model(fit_bias_model(corpus), corpus, Split::test);
}

}  // namespace hti
