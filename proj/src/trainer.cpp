#include "hti/trainer.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "hti/errors.hpp"
#include "hti/evaluator.hpp"
#include "hti/parallel.hpp"
#include "hti/predictor.hpp"

namespace hti {

namespace {

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void shuffle_indices(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

void check_leave_target_out(const TrainingExample& ex, const Corpus& corpus) {
  auto check = [&](const ReviewGrid& grid) {
    for (const auto src : grid.source) {
      if (src < 0) continue;
      const Interaction& it = corpus.interactions[static_cast<std::size_t>(src)];
      if (it.user == ex.user && it.item == ex.item) {
        throw std::logic_error("training example contains its own target review");
      }
    }
  };
  check(ex.user_reviews);
  check(ex.item_reviews);
}

std::vector<Tensor> snapshot(const ParamTape& params) {
  std::vector<Tensor> values;
  values.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) values.push_back(params.value_at(i));
  return values;
}

void restore(ParamTape& params, const std::vector<Tensor>& values) {
  for (std::size_t i = 0; i < params.size(); ++i) params.value_at(i) = values[i];
}

}  // namespace

void validate(const HyperParams& hp) {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw UsageError(std::string("invalid hyperparameter: ") + what);
  };
  require(hp.batch_size > 0, "batch_size must be positive");
  require(hp.learning_rate >= 0.0 && std::isfinite(hp.learning_rate), "learning_rate must be >= 0");
  require(hp.lambda >= 0.0 && std::isfinite(hp.lambda), "lambda must be >= 0");
  require(hp.dropout >= 0.0 && hp.dropout < 1.0, "dropout must be in [0, 1)");
  require(hp.embed_dim > 0, "embed_dim must be positive");
  require(hp.conv1_maps > 0, "conv1_maps must be positive");
  require(hp.latent_dim > 0, "latent_dim must be positive");
  require(hp.max_epochs > 0, "max_epochs must be positive");
  require(hp.patience > 0, "patience must be positive");
  require(hp.grad_clip >= 0.0, "grad_clip must be >= 0");
}

ModelConfig model_config_for(const Corpus& corpus, const HyperParams& hp) {
  ModelConfig c;
  c.vocab_size = std::max<std::size_t>(1, corpus.vocabulary.size());
  c.num_users = corpus.num_users();
  c.num_items = corpus.num_items();
  c.embed_dim = hp.embed_dim;
  c.conv1_maps = hp.conv1_maps;
  c.latent_dim = hp.latent_dim;
  c.dropout = hp.dropout;
  c.variant = hp.variant;
  return c;
}

AdamState::AdamState(const ParamTape& params, AdamConfig config)
    : config_(config), m_(params.make_gradient_buffer()), v_(params.make_gradient_buffer()) {}

void adam_step(ParamTape& params, const GradientSet& grads, AdamState& state, double learning_rate) {
  ++state.step_;
  const AdamConfig& c = state.config_;
  const double t = static_cast<double>(state.step_);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params.value_at(i).vector();
    const auto g = grads.at(i).vector();
    auto m = state.m_.at(i).vector();
    auto v = state.v_.at(i).vector();
    m = c.beta1 * m + (1.0 - c.beta1) * g;
    v = c.beta2 * v + (1.0 - c.beta2) * g.cwiseProduct(g);
    // With beta = 0 the correction factor is 1 - 0^t = 1.
    const double c1 = correction1 == 0.0 ? 1.0 : correction1;
    const double c2 = correction2 == 0.0 ? 1.0 : correction2;
    theta.array() -= learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + c.eps);
  }
}

double clip_global_norm(GradientSet& grads, double max_norm) {
  const double norm = std::sqrt(grads.squared_norm());
  if (max_norm > 0.0 && norm > max_norm) grads.scale(max_norm / norm);
  return norm;
}

std::string to_ndjson(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["val_mae"] = r.val_mae;
  j["val_rmse"] = r.val_rmse;
  j["wall_seconds"] = r.wall_seconds;
  return j.dump();
}

double train_batch(HtiModel& model, AdamState& adam, const Corpus& corpus, std::span<const std::size_t> batch,
                   const HyperParams& hp, std::uint64_t batch_seed) {
  ParamTape& params = model.params();
  const std::size_t workers = std::min(resolve_threads(hp.threads), batch.size());
  std::vector<GradientSet> worker_grads;
  worker_grads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) worker_grads.push_back(params.make_gradient_buffer());
  std::vector<double> squared_errors(batch.size(), 0.0);
  const double scale = 2.0 / static_cast<double>(batch.size());

  parallel_chunks(batch.size(), workers, [&](std::size_t w, std::size_t begin, std::size_t end) {
    for (std::size_t b = begin; b < end; ++b) {
      const Interaction& it = corpus.interactions[batch[b]];
      const TrainingExample ex = assemble_example(corpus, it.user, it.item, it.rating);
      std::mt19937_64 rng(mix_seed(batch_seed, b));
      ForwardOptions opts;
      opts.train = true;
      opts.rng = &rng;
      const ForwardTrace tr = model.forward(ex, opts);
      const double residual = tr.prediction - ex.rating;
      squared_errors[b] = residual * residual;
      if (!std::isfinite(residual)) continue;
      model.backward(tr, ex, scale * residual, worker_grads[w]);
    }
  });

  const double batch_loss =
      std::accumulate(squared_errors.begin(), squared_errors.end(), 0.0) / static_cast<double>(batch.size());
  if (!std::isfinite(batch_loss)) throw NumericalError("non-finite training loss");

  GradientSet& grads = params.grads();
  grads.zero();
  for (const auto& g : worker_grads) grads.accumulate(g);
  add_l2_gradient(params, hp.lambda, grads);
  params.mask_frozen(grads);
  const double norm = clip_global_norm(grads, hp.grad_clip);
  if (!std::isfinite(norm)) throw NumericalError("non-finite gradient norm");
  adam_step(params, grads, adam, hp.learning_rate);
  return batch_loss;
}

TrainResult train(const Corpus& corpus, const HyperParams& hp, const EpochCallback& on_epoch) {
  validate(hp);
  std::vector<std::size_t> train_idx = corpus.split_indices(Split::train);
  const std::vector<std::size_t> val_idx = corpus.split_indices(Split::val);
  if (train_idx.empty()) throw DataError("training split is empty");
  if (val_idx.empty()) throw DataError("validation split is empty");

  TrainResult result{HtiModel(model_config_for(corpus, hp), hp.seed), {}, 0, 0.0, false, {}};
  HtiModel& model = result.model;
  if (!hp.embeddings_path.empty()) model.load_embeddings(hp.embeddings_path, corpus.vocabulary);
  if (hp.init_output_bias) {
    double sum = 0.0;
    for (const auto i : train_idx) sum += corpus.interactions[i].rating;
    model.set_output_bias(sum / static_cast<double>(train_idx.size()));
  }

  AdamState adam(model.params());
  std::mt19937_64 shuffle_rng(mix_seed(hp.seed, 0xB47C4ULL));
  std::vector<Tensor> best = snapshot(model.params());
  double best_mae = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  const auto start = std::chrono::steady_clock::now();

  for (std::size_t epoch = 1; epoch <= hp.max_epochs; ++epoch) {
    shuffle_indices(train_idx, shuffle_rng);
    {
      const Interaction& first = corpus.interactions[train_idx.front()];
      check_leave_target_out(assemble_example(corpus, first.user, first.item, first.rating), corpus);
    }
    double loss_sum = 0.0;
    std::size_t batches = 0;
    try {
      for (std::size_t begin = 0; begin < train_idx.size(); begin += hp.batch_size) {
        const std::size_t end = std::min(train_idx.size(), begin + hp.batch_size);
        const std::span<const std::size_t> batch(train_idx.data() + begin, end - begin);
        loss_sum += train_batch(model, adam, corpus, batch, hp, mix_seed(hp.seed, epoch * 1000003ULL + batches));
        ++batches;
      }
    } catch (const NumericalError& e) {
      restore(model.params(), best);
      result.diverged = true;
      result.diagnostic = std::string(e.what()) + " in epoch " + std::to_string(epoch);
      return result;
    }

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(batches) + hp.lambda * l2_penalty(model.params());
    const MetricsReport val = evaluate(model, corpus, Split::val, hp.threads);
    record.val_mae = val.mae;
    record.val_rmse = val.rmse;
    record.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(record);
    if (on_epoch) on_epoch(record);

    if (val.mae < best_mae) {
      best_mae = val.mae;
      best = snapshot(model.params());
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= hp.patience) {
      break;
    }
  }
  restore(model.params(), best);
  result.best_val_mae = best_mae;
  return result;
}

LambdaSearchResult select_lambda(const Corpus& corpus, const HyperParams& hp, const std::vector<double>& grid,
                                 const EpochCallback& on_epoch) {
  if (grid.empty()) throw UsageError("lambda grid is empty");
  LambdaSearchResult search;
  for (const double lambda : grid) {
    HyperParams trial = hp;
    trial.lambda = lambda;
    TrainResult run = train(corpus, trial, on_epoch);
    search.val_mae.emplace_back(lambda, run.best_val_mae);
    if (!search.best || run.best_val_mae < search.best->best_val_mae) {
      search.best_lambda = lambda;
      search.best.emplace(std::move(run));
    }
  }
  return search;
}

}  // namespace hti
