#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <json.hpp>

#include "hti/errors.hpp"
#include "hti/evaluator.hpp"
#include "hti/review_interaction.hpp"
#include "support.hpp"

namespace hti {
namespace {

const Corpus& shared_corpus() {
  static const Corpus c = testing::synthetic_corpus(12, 8, 5, 17);
  return c;
}

HtiModel make_model(Variant v, std::uint64_t seed = 3) {
  HyperParams hp = testing::small_hyper_params();
  hp.variant = v;
  HtiModel m(model_config_for(shared_corpus(), hp), seed);
  std::mt19937_64 rng(seed);
  testing::randomize(m.params(), rng, 0.3);
  m.set_output_bias(3.5);
  return m;
}

TEST(Metrics, WorkedExamples) {
  const std::vector<double> p1{2, 4}, t1{3, 3};
  MetricsReport r = compute_metrics(p1, t1);
  EXPECT_DOUBLE_EQ(r.mae, 1.0);
  EXPECT_DOUBLE_EQ(r.rmse, 1.0);
  const std::vector<double> p2{3, 3, 3, 5}, t2{3, 3, 3, 1};
  r = compute_metrics(p2, t2);
  EXPECT_DOUBLE_EQ(r.mae, 1.0);
  EXPECT_DOUBLE_EQ(r.rmse, 2.0);
  EXPECT_EQ(r.n_examples, 4u);
}

TEST(Metrics, PredictionsAreClipped) {
  const std::vector<double> p{-3.0, 9.0, 0.5}, t{1.0, 5.0, 2.0};
  const MetricsReport r = compute_metrics(p, t);
  EXPECT_DOUBLE_EQ(r.mae, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.rmse, std::sqrt(1.0 / 3.0));
}

TEST(Metrics, SizeMismatchThrows) {
  const std::vector<double> p{1, 2}, t{1};
  EXPECT_THROW(compute_metrics(p, t), std::invalid_argument);
}

TEST(MetricsProperty, RmseAtLeastMaeAndMatchesOracle) {
  std::mt19937_64 rng(55);
  std::uniform_real_distribution<double> pred(-1.0, 7.0);
  std::uniform_int_distribution<int> star(1, 5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 50;
    std::vector<double> p(n), t(n);
    double abs_sum = 0.0;
    double sq_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = pred(rng);
      t[i] = star(rng);
      const double c = std::min(5.0, std::max(1.0, p[i]));
      abs_sum += std::abs(c - t[i]);
      sq_sum += (c - t[i]) * (c - t[i]);
    }
    const MetricsReport r = compute_metrics(p, t);
    EXPECT_GE(r.rmse + 1e-12, r.mae);
    EXPECT_NEAR(r.mae, abs_sum / static_cast<double>(n), 1e-12);
    EXPECT_NEAR(r.rmse, std::sqrt(sq_sum / static_cast<double>(n)), 1e-12);
    EXPECT_LE(r.mae, 4.0);
  }
}

TEST(Evaluate, CoversSplitAndIgnoresThreadCount) {
  const HtiModel m = make_model(Variant::full);
  const Corpus& c = shared_corpus();
  const MetricsReport one = evaluate(m, c, Split::test, 1);
  const MetricsReport three = evaluate(m, c, Split::test, 3);
  EXPECT_EQ(one.n_examples, c.split_indices(Split::test).size());
  EXPECT_EQ(one.mae, three.mae);
  EXPECT_EQ(one.rmse, three.rmse);

  const auto idx = c.split_indices(Split::test);
  const auto preds = predict_interactions(m, c, idx, 2);
  std::vector<double> targets;
  for (const auto i : idx) targets.push_back(c.interactions[i].rating);
  EXPECT_EQ(compute_metrics(preds, targets).mae, one.mae);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const Interaction& it = c.interactions[idx[k]];
    EXPECT_EQ(preds[k], m.predict(assemble_example(c, it.user, it.item, it.rating)));
  }
}

TEST(Evaluate, ReportJson) {
  MetricsReport r;
  r.label = "full";
  r.mae = 0.5;
  r.rmse = 0.75;
  r.n_examples = 10;
  r.run_mae = {0.4, 0.6};
  r.run_rmse = {0.7, 0.8};
  const auto j = nlohmann::json::parse(to_json(r));
  EXPECT_EQ(j.at("label"), "full");
  EXPECT_EQ(j.at("mae"), 0.5);
  EXPECT_EQ(j.at("rmse"), 0.75);
  EXPECT_EQ(j.at("n_examples"), 10);
  EXPECT_EQ(j.at("run_mae").size(), 2u);
}

std::pair<std::string, std::string> pair_of(std::size_t interaction) {
  const Corpus& c = shared_corpus();
  const Interaction& it = c.interactions[interaction];
  return {c.user_ids[static_cast<std::size_t>(it.user)], c.item_ids[static_cast<std::size_t>(it.item)]};
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

TEST(TraceProperty, WeightsNormalizedOnEverySide) {
  const Corpus& c = shared_corpus();
  for (const Variant v : {Variant::full, Variant::wavg, Variant::davg, Variant::dmax}) {
    const HtiModel m = make_model(v);
    for (std::size_t i = 0; i < c.interactions.size(); i += 2) {
      const auto [u, it] = pair_of(i);
      const AttentionTrace t = export_attention_trace(m, c, u, it, 4);
      for (const auto* w : {&t.user_initial, &t.user_intermediate, &t.user_final, &t.item_initial,
                            &t.item_intermediate, &t.item_final}) {
        if (w->empty()) continue;
        EXPECT_NEAR(sum(*w), 1.0, 1e-12);
        for (const double x : *w) EXPECT_GE(x, 0.0);
      }
      EXPECT_LE(t.user_reviews.size(), 4u);
      for (std::size_t r = 1; r < t.user_reviews.size(); ++r) {
        EXPECT_GE(t.user_reviews[r - 1].final_weight, t.user_reviews[r].final_weight);
      }
      if (v == Variant::davg || v == Variant::dmax) {
        EXPECT_EQ(t.user_initial, t.user_final);
        EXPECT_EQ(t.item_intermediate, t.item_final);
      }
      if (v == Variant::full) {
        for (const auto& rev : t.user_reviews) {
          double ws = 0.0;
          for (const auto& w : rev.words) ws += w.weight;
          if (!rev.words.empty()) EXPECT_NEAR(ws, 1.0, 1e-12);
        }
      }
    }
  }
}

TEST(Trace, FinalWeightBlendsWithMeanGate) {
  const Corpus& c = shared_corpus();
  const HtiModel m = make_model(Variant::full);
  const auto [u, it] = pair_of(5);
  const AttentionTrace t = export_attention_trace(m, c, u, it, 100);
  EXPECT_GT(t.gate_user_mean, 0.0);
  EXPECT_LT(t.gate_user_mean, 1.0);
  for (std::size_t k = 0; k < t.user_final.size(); ++k) {
    EXPECT_NEAR(t.user_final[k], t.gate_user_mean * t.user_initial[k] + (1 - t.gate_user_mean) * t.user_intermediate[k],
                1e-15);
  }
  const Interaction& target = c.interactions[5];
  EXPECT_EQ(t.predicted_rating, m.predict(assemble_example(c, target.user, target.item, target.rating)));
  EXPECT_EQ(t.true_rating, target.rating);
  EXPECT_EQ(t.user_reviews.size(), t.user_final.size());
  for (const auto& rev : t.user_reviews) {
    EXPECT_NE(c.interactions[static_cast<std::size_t>(rev.interaction)].item, target.item);
    EXPECT_EQ(c.item_ids[static_cast<std::size_t>(c.interactions[static_cast<std::size_t>(rev.interaction)].item)],
              rev.counterpart_id);
  }
}

TEST(Trace, JsonRoundTrip) {
  const HtiModel m = make_model(Variant::full);
  const auto [u, it] = pair_of(3);
  const AttentionTrace t = export_attention_trace(m, shared_corpus(), u, it, 3);
  const std::string text = to_json(t);
  const AttentionTrace back = attention_trace_from_json(text);
  EXPECT_EQ(back.user_id, t.user_id);
  EXPECT_EQ(back.variant, "full");
  EXPECT_NEAR(back.predicted_rating, t.predicted_rating, 1e-5);
  ASSERT_EQ(back.user_final.size(), t.user_final.size());
  for (std::size_t k = 0; k < t.user_final.size(); ++k) EXPECT_NEAR(back.user_final[k], t.user_final[k], 1e-5);
  ASSERT_EQ(back.item_reviews.size(), t.item_reviews.size());
  for (std::size_t r = 0; r < t.item_reviews.size(); ++r) {
    EXPECT_EQ(back.item_reviews[r].counterpart_id, t.item_reviews[r].counterpart_id);
    ASSERT_EQ(back.item_reviews[r].words.size(), t.item_reviews[r].words.size());
    for (std::size_t w = 0; w < t.item_reviews[r].words.size(); ++w) {
      EXPECT_EQ(back.item_reviews[r].words[w].token, t.item_reviews[r].words[w].token);
      EXPECT_NEAR(back.item_reviews[r].words[w].weight, t.item_reviews[r].words[w].weight, 1e-5);
    }
  }
  EXPECT_EQ(to_json(back), text);
  EXPECT_THROW(attention_trace_from_json("{\"user_id\": 3}"), DataError);
  EXPECT_THROW(attention_trace_from_json("not json"), DataError);
}

TEST(Trace, UnknownIdsAreUsageErrors) {
  const HtiModel m = make_model(Variant::full);
  const Corpus& c = shared_corpus();
  EXPECT_THROW(export_attention_trace(m, c, "nobody", c.item_ids[0], 3), UsageError);
  EXPECT_THROW(export_attention_trace(m, c, c.user_ids[0], "nothing", 3), UsageError);
  std::string missing_item;
  for (std::size_t i = 0; i < c.num_items() && missing_item.empty(); ++i) {
    if (!c.find_interaction(0, static_cast<std::int32_t>(i))) missing_item = c.item_ids[i];
  }
  ASSERT_FALSE(missing_item.empty());
  EXPECT_THROW(export_attention_trace(m, c, c.user_ids[0], missing_item, 3), UsageError);
}

TEST(Benchmark, RowsFlopsAndCsv) {
  const auto rows = benchmark_complexity({2, 4}, {3}, {4, 8}, 2, 2);
  ASSERT_EQ(rows.size(), 4u);
  for (const auto& r : rows) {
    EXPECT_GT(r.seconds, 0.0);
    EXPECT_EQ(r.flops, interaction_flops(r.m, r.n, r.k, r.k));
  }
  const std::string csv = benchmark_csv(rows);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "m,n,k,seconds,flops");
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 4);
  }
  EXPECT_EQ(lines, 4u);
}

TEST(ScalingFitTest, RecoversExactLinearModel) {
  std::vector<BenchmarkRow> rows;
  for (std::size_t m : {5u, 10u, 20u}) {
    for (std::size_t n : {5u, 10u, 20u}) {
      rows.push_back({m, n, 8, 1e-6 + 2e-8 * static_cast<double>(m * n) + 3e-9 * static_cast<double>(m + n), 0});
    }
  }
  const ScalingFit f = fit_mn_scaling(rows);
  EXPECT_NEAR(f.intercept, 1e-6, 1e-12);
  EXPECT_NEAR(f.coef_mn, 2e-8, 1e-14);
  EXPECT_NEAR(f.coef_sum, 3e-9, 1e-14);
  EXPECT_LT(f.max_rel_deviation, 1e-9);
  EXPECT_TRUE(f.monotone);

  rows.back().seconds = 1e-7;
  const ScalingFit broken = fit_mn_scaling(rows);
  EXPECT_FALSE(broken.monotone);
  EXPECT_GT(broken.max_rel_deviation, 0.2);
  EXPECT_THROW(fit_mn_scaling({rows[0], rows[1]}), std::invalid_argument);
}

TEST(RepeatedRuns, AblationAveragesSeeds) {
  HyperParams hp = testing::small_hyper_params();
  hp.max_epochs = 2;
  hp.learning_rate = 1e-2;
  RepeatedRunConfig runs;
  runs.seeds = {1, 2};
  const MetricsReport r = run_ablation(Variant::davg, shared_corpus(), hp, runs);
  EXPECT_EQ(r.label, "davg");
  ASSERT_EQ(r.run_mae.size(), 2u);
  EXPECT_NEAR(r.mae, (r.run_mae[0] + r.run_mae[1]) / 2.0, 1e-15);
  EXPECT_NEAR(r.rmse, (r.run_rmse[0] + r.run_rmse[1]) / 2.0, 1e-15);
}

TEST(RepeatedRuns, RatioSweepLabelsRows) {
  HyperParams hp = testing::small_hyper_params();
  hp.max_epochs = 1;
  RepeatedRunConfig runs;
  runs.seeds = {4};
  const auto rows = run_ratio_sweep(shared_corpus(), hp, {0.4, 0.8}, runs);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].train_ratio, 0.4);
  EXPECT_NE(rows[0].report.label.find("train_ratio"), std::string::npos);
  EXPECT_EQ(rows[0].report.n_examples, rows[1].report.n_examples);
}

}  // namespace
}  // namespace hti
