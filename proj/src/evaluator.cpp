#include "hti/evaluator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/Dense>
#include <json.hpp>

#include "hti/errors.hpp"
#include "hti/parallel.hpp"
#include "hti/review_interaction.hpp"

namespace hti {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<double> valid_weights(const std::vector<double>& weights, const Mask& mask) {
  std::vector<double> out;
  for (std::size_t r = 0; r < mask.size() && r < weights.size(); ++r) {
    if (mask[r]) out.push_back(weights[r]);
  }
  return out;
}

struct SideWeights {
  std::vector<double> initial, intermediate, final_w;
  double gate_mean = 0.0;
};

SideWeights side_weights(const ForwardTrace& tr, bool user_side, Variant variant) {
  SideWeights w;
  const SideTrace& side = user_side ? tr.user : tr.item;
  if (variant == Variant::davg || variant == Variant::dmax) {
    const ReviewRep& pooled = user_side ? tr.pooled_user : tr.pooled_item;
    w.initial = valid_weights(pooled.alpha, side.mask);
    w.intermediate = w.initial;
    w.final_w = w.initial;
    return w;
  }
  const AggregateResult& agg = tr.interaction;
  const auto& delta = user_side ? agg.initial.delta_user : agg.initial.delta_item;
  const auto& beta = user_side ? agg.inter_user.beta : agg.inter_item.beta;
  const Vec& g = user_side ? agg.gate_user.g : agg.gate_item.g;
  w.gate_mean = g.size() > 0 ? g.mean() : 0.0;
  w.initial = valid_weights(delta, side.mask);
  w.intermediate = valid_weights(beta, side.mask);
  w.final_w.resize(w.initial.size());
  for (std::size_t k = 0; k < w.initial.size(); ++k) {
    w.final_w[k] = w.gate_mean * w.initial[k] + (1.0 - w.gate_mean) * w.intermediate[k];
  }
  return w;
}

std::vector<ReviewAttention> top_reviews(const Corpus& corpus, const ForwardTrace& tr, const ReviewGrid& grid,
                                         bool user_side, const SideWeights& w, std::size_t top_r) {
  const SideTrace& side = user_side ? tr.user : tr.item;
  std::vector<std::size_t> slots;
  for (std::size_t r = 0; r < side.mask.size(); ++r) {
    if (side.mask[r]) slots.push_back(r);
  }
  std::vector<std::size_t> order(slots.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return w.final_w[a] > w.final_w[b]; });
  if (order.size() > top_r) order.resize(top_r);

  std::vector<ReviewAttention> out;
  for (const std::size_t pos : order) {
    const std::size_t slot = slots[pos];
    ReviewAttention ra;
    ra.interaction = grid.source[slot];
    const Interaction& it = corpus.interactions[static_cast<std::size_t>(ra.interaction)];
    ra.counterpart_id = user_side ? corpus.item_ids[it.item] : corpus.user_ids[it.user];
    ra.initial_weight = w.initial[pos];
    ra.intermediate_weight = w.intermediate[pos];
    ra.final_weight = w.final_w[pos];
    const auto tokens = grid.review_tokens(slot);
    const auto mask = grid.review_word_mask(slot);
    const auto& alpha = side.reps[slot].alpha;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (!mask[i]) continue;
      ra.words.push_back({corpus.vocabulary.token(tokens[i]), i < alpha.size() ? alpha[i] : 0.0});
    }
    out.push_back(std::move(ra));
  }
  return out;
}

nlohmann::ordered_json review_to_json(const ReviewAttention& r) {
  nlohmann::ordered_json j;
  j["interaction"] = r.interaction;
  j["counterpart_id"] = r.counterpart_id;
  j["initial_weight"] = r.initial_weight;
  j["intermediate_weight"] = r.intermediate_weight;
  j["final_weight"] = r.final_weight;
  nlohmann::ordered_json words = nlohmann::ordered_json::array();
  for (const auto& w : r.words) words.push_back({{"token", w.token}, {"weight", w.weight}});
  j["words"] = std::move(words);
  return j;
}

ReviewAttention review_from_json(const nlohmann::json& j) {
  ReviewAttention r;
  r.interaction = j.at("interaction").get<std::int64_t>();
  r.counterpart_id = j.at("counterpart_id").get<std::string>();
  r.initial_weight = j.at("initial_weight").get<double>();
  r.intermediate_weight = j.at("intermediate_weight").get<double>();
  r.final_weight = j.at("final_weight").get<double>();
  for (const auto& w : j.at("words")) r.words.push_back({w.at("token").get<std::string>(), w.at("weight").get<double>()});
  return r;
}

MetricsReport mean_of_runs(std::string label, const std::vector<MetricsReport>& runs) {
  MetricsReport out;
  out.label = std::move(label);
  for (const auto& r : runs) {
    out.run_mae.push_back(r.mae);
    out.run_rmse.push_back(r.rmse);
    out.mae += r.mae;
    out.rmse += r.rmse;
    out.n_examples += r.n_examples;
    out.train_seconds += r.train_seconds;
    out.test_seconds += r.test_seconds;
  }
  if (!runs.empty()) {
    const double n = static_cast<double>(runs.size());
    out.mae /= n;
    out.rmse /= n;
    out.n_examples /= runs.size();
    out.train_seconds /= n;
    out.test_seconds /= n;
  }
  return out;
}

MetricsReport single_run(const Corpus& base, const HyperParams& hp, const SplitRatios& ratios, std::uint64_t seed) {
  const Corpus corpus = split_dataset(base, ratios, seed);
  HyperParams run_hp = hp;
  run_hp.seed = seed;
  const auto t0 = Clock::now();
  TrainResult trained = train(corpus, run_hp);
  if (trained.diverged) throw NumericalError(trained.diagnostic);
  const double train_seconds = seconds_since(t0);
  const auto t1 = Clock::now();
  MetricsReport report = evaluate(trained.model, corpus, Split::test, hp.threads);
  report.test_seconds = seconds_since(t1);
  report.train_seconds = train_seconds;
  return report;
}

}  // namespace

MetricsReport compute_metrics(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size()) throw std::invalid_argument("prediction/target size mismatch");
  MetricsReport report;
  report.n_examples = predictions.size();
  if (predictions.empty()) return report;
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double e = clip_rating(predictions[i]) - targets[i];
    abs_sum += std::abs(e);
    sq_sum += e * e;
  }
  const double n = static_cast<double>(predictions.size());
  report.mae = abs_sum / n;
  report.rmse = std::sqrt(sq_sum / n);
  return report;
}

std::vector<double> predict_interactions(const HtiModel& model, const Corpus& corpus,
                                         std::span<const std::size_t> indices, std::size_t threads) {
  std::vector<double> preds(indices.size(), 0.0);
  parallel_chunks(indices.size(), resolve_threads(threads), [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Interaction& it = corpus.interactions[indices[i]];
      preds[i] = model.predict(assemble_example(corpus, it.user, it.item, it.rating));
    }
  });
  return preds;
}

MetricsReport evaluate(const HtiModel& model, const Corpus& corpus, Split split, std::size_t threads) {
  const std::vector<std::size_t> idx = corpus.split_indices(split);
  const std::vector<double> preds = predict_interactions(model, corpus, idx, threads);
  std::vector<double> targets;
  targets.reserve(idx.size());
  for (const auto i : idx) targets.push_back(corpus.interactions[i].rating);
  for (const double p : preds) {
    if (!std::isfinite(p)) throw NumericalError("non-finite prediction during evaluation");
  }
  MetricsReport report = compute_metrics(preds, targets);
  report.label = std::string(variant_name(model.config().variant));
  return report;
}

std::string to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["label"] = r.label;
  j["mae"] = r.mae;
  j["rmse"] = r.rmse;
  j["n_examples"] = r.n_examples;
  if (!r.run_mae.empty()) {
    j["run_mae"] = r.run_mae;
    j["run_rmse"] = r.run_rmse;
  }
  j["train_seconds"] = r.train_seconds;
  j["test_seconds"] = r.test_seconds;
  return j.dump();
}

MetricsReport run_ablation(Variant variant, const Corpus& corpus, const HyperParams& hp,
                           const RepeatedRunConfig& runs) {
  if (runs.seeds.empty()) throw UsageError("no seeds given for repeated runs");
  HyperParams v_hp = hp;
  v_hp.variant = variant;
  std::vector<MetricsReport> reports;
  for (const auto seed : runs.seeds) reports.push_back(single_run(corpus, v_hp, runs.ratios, seed));
  return mean_of_runs(std::string(variant_name(variant)), reports);
}

std::vector<RatioSweepRow> run_ratio_sweep(const Corpus& corpus, const HyperParams& hp,
                                           const std::vector<double>& train_ratios, const RepeatedRunConfig& runs) {
  if (runs.seeds.empty()) throw UsageError("no seeds given for repeated runs");
  std::vector<RatioSweepRow> rows;
  for (const double ratio : train_ratios) {
    SplitRatios ratios = runs.ratios;
    ratios.train = ratio;
    std::vector<MetricsReport> reports;
    for (const auto seed : runs.seeds) reports.push_back(single_run(corpus, hp, ratios, seed));
    rows.push_back({ratio, mean_of_runs("train_ratio=" + std::to_string(ratio), reports)});
  }
  return rows;
}

AttentionTrace export_attention_trace(const HtiModel& model, const Corpus& corpus, const std::string& user_id,
                                      const std::string& item_id, std::size_t top_r) {
  const auto u = corpus.user_index(user_id);
  if (!u) throw UsageError("unknown user id: " + user_id);
  const auto v = corpus.item_index(item_id);
  if (!v) throw UsageError("unknown item id: " + item_id);
  const auto found = corpus.find_interaction(*u, *v);
  if (!found) throw UsageError("pair not in corpus: " + user_id + " / " + item_id);

  const double rating = corpus.interactions[*found].rating;
  const TrainingExample ex = assemble_example(corpus, *u, *v, rating);
  const ForwardTrace tr = model.forward(ex);
  const Variant variant = model.config().variant;

  AttentionTrace out;
  out.user_id = user_id;
  out.item_id = item_id;
  out.variant = std::string(variant_name(variant));
  out.predicted_rating = tr.prediction;
  out.true_rating = rating;
  const SideWeights uw = side_weights(tr, true, variant);
  const SideWeights iw = side_weights(tr, false, variant);
  out.gate_user_mean = uw.gate_mean;
  out.gate_item_mean = iw.gate_mean;
  out.user_initial = uw.initial;
  out.user_intermediate = uw.intermediate;
  out.user_final = uw.final_w;
  out.item_initial = iw.initial;
  out.item_intermediate = iw.intermediate;
  out.item_final = iw.final_w;
  out.user_reviews = top_reviews(corpus, tr, ex.user_reviews, true, uw, top_r);
  out.item_reviews = top_reviews(corpus, tr, ex.item_reviews, false, iw, top_r);
  return out;
}

std::string to_json(const AttentionTrace& t) {
  nlohmann::ordered_json j;
  j["user_id"] = t.user_id;
  j["item_id"] = t.item_id;
  j["variant"] = t.variant;
  j["predicted_rating"] = t.predicted_rating;
  j["true_rating"] = t.true_rating;
  j["gate_user_mean"] = t.gate_user_mean;
  j["gate_item_mean"] = t.gate_item_mean;
  j["user_weights"] = {{"initial", t.user_initial}, {"intermediate", t.user_intermediate}, {"final", t.user_final}};
  j["item_weights"] = {{"initial", t.item_initial}, {"intermediate", t.item_intermediate}, {"final", t.item_final}};
  nlohmann::ordered_json ur = nlohmann::ordered_json::array();
  for (const auto& r : t.user_reviews) ur.push_back(review_to_json(r));
  nlohmann::ordered_json ir = nlohmann::ordered_json::array();
  for (const auto& r : t.item_reviews) ir.push_back(review_to_json(r));
  j["user_reviews"] = std::move(ur);
  j["item_reviews"] = std::move(ir);
  return j.dump(2);
}

AttentionTrace attention_trace_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    AttentionTrace t;
    t.user_id = j.at("user_id").get<std::string>();
    t.item_id = j.at("item_id").get<std::string>();
    t.variant = j.at("variant").get<std::string>();
    t.predicted_rating = j.at("predicted_rating").get<double>();
    t.true_rating = j.at("true_rating").get<double>();
    t.gate_user_mean = j.at("gate_user_mean").get<double>();
    t.gate_item_mean = j.at("gate_item_mean").get<double>();
    const auto& uw = j.at("user_weights");
    t.user_initial = uw.at("initial").get<std::vector<double>>();
    t.user_intermediate = uw.at("intermediate").get<std::vector<double>>();
    t.user_final = uw.at("final").get<std::vector<double>>();
    const auto& iw = j.at("item_weights");
    t.item_initial = iw.at("initial").get<std::vector<double>>();
    t.item_intermediate = iw.at("intermediate").get<std::vector<double>>();
    t.item_final = iw.at("final").get<std::vector<double>>();
    for (const auto& r : j.at("user_reviews")) t.user_reviews.push_back(review_from_json(r));
    for (const auto& r : j.at("item_reviews")) t.item_reviews.push_back(review_from_json(r));
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed attention trace: ") + e.what());
  }
}

std::vector<BenchmarkRow> benchmark_complexity(const std::vector<std::size_t>& ms, const std::vector<std::size_t>& ns,
                                               const std::vector<std::size_t>& ks, std::size_t repeats,
                                               std::size_t trials, std::uint64_t seed) {
  if (repeats == 0 || trials == 0) throw UsageError("benchmark repeats and trials must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.5);
  std::vector<BenchmarkRow> rows;
  for (const std::size_t k : ks) {
    ParamTape tape;
    const InteractionParams ids = register_interaction(tape, k, k);
    for (std::size_t i = 0; i < tape.size(); ++i) {
      for (double& x : tape.value_at(i).values()) x = normal(rng) / std::sqrt(static_cast<double>(k));
    }
    struct Case {
      std::size_t m, n;
      MatrixRM user, item;
      Mask umask, imask;
      double best = std::numeric_limits<double>::infinity();
    };
    std::vector<Case> cases;
    for (const std::size_t m : ms) {
      for (const std::size_t n : ns) {
        Case c{m, n, MatrixRM(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)),
               MatrixRM(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k)), Mask(m, 1), Mask(n, 1)};
        for (Eigen::Index i = 0; i < c.user.size(); ++i) c.user.data()[i] = normal(rng);
        for (Eigen::Index i = 0; i < c.item.size(); ++i) c.item.data()[i] = normal(rng);
        cases.push_back(std::move(c));
      }
    }
    // Trials rotate over the configurations so slow phases of a shared
    // machine hit all of them rather than whichever ran at the time.
    double sink = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      for (auto& c : cases) {
        const auto start = Clock::now();
        for (std::size_t r = 0; r < repeats; ++r) {
          const AggregateResult res = aggregate(c.user, c.item, c.umask, c.imask, tape, ids);
          sink += res.d_user[0];
        }
        c.best = std::min(c.best, seconds_since(start));
      }
    }
    if (!std::isfinite(sink)) throw NumericalError("benchmark produced non-finite output");
    for (const auto& c : cases) {
      rows.push_back({c.m, c.n, k, c.best / static_cast<double>(repeats), interaction_flops(c.m, c.n, k, k)});
    }
  }
  return rows;
}

std::string benchmark_csv(const std::vector<BenchmarkRow>& rows) {
  std::string out = "m,n,k,seconds,flops\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.9g", r.seconds);
    out += std::to_string(r.m) + "," + std::to_string(r.n) + "," + std::to_string(r.k) + "," + buf + "," +
           std::to_string(r.flops) + "\n";
  }
  return out;
}

ScalingFit fit_mn_scaling(const std::vector<BenchmarkRow>& rows, double monotone_tolerance) {
  ScalingFit fit;
  if (rows.size() < 3) throw std::invalid_argument("scaling fit needs at least 3 rows");
  const auto n = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd a(n, 3);
  Eigen::VectorXd t(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    a(i, 0) = 1.0;
    a(i, 1) = static_cast<double>(r.m * r.n);
    a(i, 2) = static_cast<double>(r.m + r.n);
    t(i) = r.seconds;
  }
  const Eigen::Vector3d coef = a.colPivHouseholderQr().solve(t);
  fit.intercept = coef(0);
  fit.coef_mn = coef(1);
  fit.coef_sum = coef(2);
  const Eigen::VectorXd pred = a * coef;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (t(i) > 0.0) fit.max_rel_deviation = std::max(fit.max_rel_deviation, std::abs(pred(i) - t(i)) / t(i));
  }

  fit.monotone = true;
  for (const auto& hi : rows) {
    for (const auto& lo : rows) {
      if (lo.m * lo.n < hi.m * hi.n && hi.seconds < (1.0 - monotone_tolerance) * lo.seconds) fit.monotone = false;
    }
  }
  return fit;
}

}  // namespace hti
