// Mini-batch training with Adam, validation-based early stopping and the
// regularization-weight search.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hti/corpus.hpp"
#include "hti/model.hpp"
#include "hti/tensor.hpp"

namespace hti {

struct HyperParams {
  std::size_t batch_size = 128;
  double learning_rate = 1e-4;
  double lambda = 1e-4;
  double dropout = 0.5;
  std::size_t embed_dim = 100;
  std::size_t conv1_maps = 50;
  std::size_t latent_dim = 32;
  std::size_t max_epochs = 50;
  std::size_t patience = 10;
  std::uint64_t seed = 1;
  double grad_clip = 5.0;  // global-norm threshold; 0 disables
  std::size_t threads = 1;  // 0 = hardware concurrency
  Variant variant = Variant::full;
  // Start the output bias at the mean training rating.
  bool init_output_bias = true;
  std::string embeddings_path;  // optional pretrained vectors
};

// Throws UsageError when a field is out of range.
void validate(const HyperParams& hp);

ModelConfig model_config_for(const Corpus& corpus, const HyperParams& hp);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamState {
 public:
  AdamState(const ParamTape& params, AdamConfig config = {});

  const AdamConfig& config() const { return config_; }
  std::size_t step() const { return step_; }
  const GradientSet& first_moment() const { return m_; }
  const GradientSet& second_moment() const { return v_; }

 private:
  friend void adam_step(ParamTape& params, const GradientSet& grads, AdamState& state, double learning_rate);

  AdamConfig config_;
  std::size_t step_ = 0;
  GradientSet m_;
  GradientSet v_;
};

// theta -= lr * m_hat / (sqrt(v_hat) + eps) with bias-corrected moments.
void adam_step(ParamTape& params, const GradientSet& grads, AdamState& state, double learning_rate);

// Rescales `grads` so its global L2 norm is at most `max_norm`. Returns the
// norm before clipping.
double clip_global_norm(GradientSet& grads, double max_norm);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_mae = 0.0;
  double val_rmse = 0.0;
  double wall_seconds = 0.0;
};

// One NDJSON line: {"epoch":..,"train_loss":..,"val_mae":..,"val_rmse":..,"wall_seconds":..}
std::string to_ndjson(const EpochRecord& record);

struct TrainResult {
  HtiModel model;
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  double best_val_mae = 0.0;
  bool diverged = false;
  std::string diagnostic;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Shuffles the training split every epoch, runs forward/backward per batch,
// applies Adam, evaluates validation MAE after each epoch and keeps the best
// parameters. Stops after `patience` epochs without improvement. On a
// non-finite loss or gradient the best parameters so far are restored and
// `diverged` is set. Throws DataError when train or val is empty.
TrainResult train(const Corpus& corpus, const HyperParams& hp, const EpochCallback& on_epoch = {});

// Runs one batch step on `model`; exposed for tests. Returns the batch data
// loss (mean squared error, train mode).
double train_batch(HtiModel& model, AdamState& adam, const Corpus& corpus, std::span<const std::size_t> batch,
                   const HyperParams& hp, std::uint64_t batch_seed);

struct LambdaSearchResult {
  double best_lambda = 0.0;
  std::vector<std::pair<double, double>> val_mae;  // (lambda, best val MAE)
  std::optional<TrainResult> best;
};

LambdaSearchResult select_lambda(const Corpus& corpus, const HyperParams& hp, const std::vector<double>& grid,
                                 const EpochCallback& on_epoch = {});

}  // namespace hti
