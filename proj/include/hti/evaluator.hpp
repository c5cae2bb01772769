// Metrics, repeated-run protocols (ablations, training-ratio sweeps),
// attention trace export and the interaction-module timing benchmark.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hti/corpus.hpp"
#include "hti/model.hpp"
#include "hti/trainer.hpp"

namespace hti {

struct MetricsReport {
  std::string label;
  double mae = 0.0;
  double rmse = 0.0;
  std::size_t n_examples = 0;
  std::vector<double> run_mae;  // one entry per repeated run
  std::vector<double> run_rmse;
  double train_seconds = 0.0;
  double test_seconds = 0.0;
};

inline double clip_rating(double r) { return r < 1.0 ? 1.0 : (r > 5.0 ? 5.0 : r); }

// MAE and RMSE after clipping predictions to [1, 5].
MetricsReport compute_metrics(std::span<const double> predictions, std::span<const double> targets);

// Eval-mode predictions (unclipped) for the given interactions.
std::vector<double> predict_interactions(const HtiModel& model, const Corpus& corpus,
                                         std::span<const std::size_t> indices, std::size_t threads = 1);

MetricsReport evaluate(const HtiModel& model, const Corpus& corpus, Split split, std::size_t threads = 1);

std::string to_json(const MetricsReport& report);

struct RepeatedRunConfig {
  std::vector<std::uint64_t> seeds{1, 2, 3};
  SplitRatios ratios;
};

// Re-splits `corpus` with every seed, trains `variant` with the same
// hyperparameters and reports mean test metrics plus the per-run values.
MetricsReport run_ablation(Variant variant, const Corpus& corpus, const HyperParams& hp,
                           const RepeatedRunConfig& runs);

struct RatioSweepRow {
  double train_ratio = 0.0;
  MetricsReport report;
};

// Repeated runs of the full model at each training ratio (val and test stay
// at the configured fractions).
std::vector<RatioSweepRow> run_ratio_sweep(const Corpus& corpus, const HyperParams& hp,
                                           const std::vector<double>& train_ratios, const RepeatedRunConfig& runs);

struct WordWeight {
  std::string token;
  double weight = 0.0;
};

struct ReviewAttention {
  std::int64_t interaction = -1;
  std::string counterpart_id;  // item for user-side reviews, user for item-side
  double initial_weight = 0.0;       // delta
  double intermediate_weight = 0.0;  // beta
  double final_weight = 0.0;
  std::vector<WordWeight> words;
};

struct AttentionTrace {
  std::string user_id;
  std::string item_id;
  std::string variant;
  double predicted_rating = 0.0;  // raw model output
  double true_rating = 0.0;
  double gate_user_mean = 0.0;
  double gate_item_mean = 0.0;
  // Weights over every valid review of each side, in slot order.
  std::vector<double> user_initial, user_intermediate, user_final;
  std::vector<double> item_initial, item_intermediate, item_final;
  std::vector<ReviewAttention> user_reviews;  // top_r by final weight
  std::vector<ReviewAttention> item_reviews;
};

// The final weight of review k is gbar * delta_k + (1 - gbar) * beta_k with
// gbar the mean gate activation of that side, i.e. the share of the review in
// the fused representation averaged over coordinates. For review-pooling
// variants all three weights are the pooling weights. Throws UsageError for
// unknown ids or a pair absent from the corpus.
AttentionTrace export_attention_trace(const HtiModel& model, const Corpus& corpus, const std::string& user_id,
                                      const std::string& item_id, std::size_t top_r);

std::string to_json(const AttentionTrace& trace);
AttentionTrace attention_trace_from_json(const std::string& text);

struct BenchmarkRow {
  std::size_t m = 0;
  std::size_t n = 0;
  std::size_t k = 0;
  double seconds = 0.0;  // per aggregate() call
  std::size_t flops = 0;
};

// Times the interaction module forward pass on random inputs for every
// (m, n, k) combination. Each row reports the fastest of `trials` timings of
// `repeats` back-to-back calls, divided by `repeats`.
std::vector<BenchmarkRow> benchmark_complexity(const std::vector<std::size_t>& ms, const std::vector<std::size_t>& ns,
                                               const std::vector<std::size_t>& ks, std::size_t repeats,
                                               std::size_t trials = 5, std::uint64_t seed = 7);

// CSV with header `m,n,k,seconds,flops`.
std::string benchmark_csv(const std::vector<BenchmarkRow>& rows);

struct ScalingFit {
  double intercept = 0.0;
  double coef_mn = 0.0;   // per unit of m*n
  double coef_sum = 0.0;  // per unit of m+n
  double max_rel_deviation = 0.0;
  bool monotone = false;  // non-decreasing in m*n up to the tolerance
};

// Least-squares fit of seconds = c + a*(m*n) + b*(m+n) over rows sharing one k.
ScalingFit fit_mn_scaling(const std::vector<BenchmarkRow>& rows, double monotone_tolerance = 0.2);

}  // namespace hti
