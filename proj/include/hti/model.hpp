// The full rating model: word encoder, review interaction and predictor wired
// together over one ParamTape, with forward/backward for a single example.

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "hti/corpus.hpp"
#include "hti/predictor.hpp"
#include "hti/review_interaction.hpp"
#include "hti/tensor.hpp"
#include "hti/word_encoder.hpp"

namespace hti {

// full: pair attention over words, interaction over reviews.
// wavg/wmax: mean/max pooling replaces word attention.
// davg/dmax: mean/max pooling over review reps replaces the interaction.
enum class Variant : std::uint8_t { full, wavg, wmax, davg, dmax };

std::string_view variant_name(Variant v);
// Throws UsageError for unknown names.
Variant parse_variant(std::string_view name);

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t embed_dim = 100;
  std::size_t conv1_maps = 50;
  std::size_t latent_dim = 32;
  std::size_t attention_hidden = 0;  // 0 means latent_dim
  double dropout = 0.5;
  Variant variant = Variant::full;
};

struct ForwardOptions {
  bool train = false;
  std::mt19937_64* rng = nullptr;  // dropout source, train mode only
  // Replaces the word attention weights with uniform ones (full variant).
  bool uniform_word_attention = false;
};

struct SideTrace {
  std::vector<WordEncoding> words;  // one per slot (empty for invalid slots)
  std::vector<ReviewRep> reps;
  MatrixRM rep_matrix;  // slots x k, zero rows for invalid slots
  Mask mask;
};

struct ForwardTrace {
  Vec user_latent;
  Vec item_latent;
  PairQuery query;
  SideTrace user;
  SideTrace item;
  AggregateResult interaction;  // full, wavg, wmax
  ReviewRep pooled_user;        // davg, dmax
  ReviewRep pooled_item;
  Vec d_user;
  Vec d_item;
  Combined combined;
  MlpTrace mlp;
  double prediction = 0.0;
  bool uniform_word_attention = false;
};

class HtiModel {
 public:
  // Initializes every parameter from `seed`: embeddings U(-0.05, 0.05),
  // latent factors N(0, 0.1^2), weight matrices Glorot-uniform, biases 0.
  HtiModel(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamTape& params() { return params_; }
  const ParamTape& params() const { return params_; }
  const WordEncoderParams& word_ids() const { return word_; }
  const InteractionParams& interaction_ids() const { return interaction_; }
  const PredictorParams& predictor_ids() const { return predictor_; }

  ForwardTrace forward(const TrainingExample& example, const ForwardOptions& options = {}) const;
  // Accumulates d(prediction) * d(prediction)/d(theta) into `grads`.
  void backward(const ForwardTrace& trace, const TrainingExample& example, double dprediction,
                GradientSet& grads) const;
  double predict(const TrainingExample& example) const { return forward(example).prediction; }

  void set_output_bias(double value);

  // Reads `token v1 ... v_dim` lines; rows of in-vocabulary tokens are
  // overwritten. Returns the number of rows loaded. Throws DataError if the
  // file cannot be read.
  std::size_t load_embeddings(const std::string& path, const Vocabulary& vocab);

 private:
  void encode_side(const ReviewGrid& grid, const Vec& query, bool uniform, SideTrace& side) const;
  void backward_side(const SideTrace& side, const ReviewGrid& grid, const Vec& query, bool uniform,
                     const MatrixRM& drep, GradientSet& grads, Vec& dquery) const;

  ModelConfig config_;
  ParamTape params_;
  WordEncoderParams word_;
  InteractionParams interaction_;
  PredictorParams predictor_;
};

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

// Binary container: magic, version, JSON metadata block (model config plus the
// caller's `metadata` object), then every named tensor. See docs/formats.md.
void save_checkpoint(const HtiModel& model, const std::string& path, const std::string& metadata_json = "{}");

struct LoadedCheckpoint {
  HtiModel model;
  std::string metadata_json;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace hti
