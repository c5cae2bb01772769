// Shared fixtures: synthetic review corpora and random tensors.

#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "hti/corpus.hpp"
#include "hti/model.hpp"
#include "hti/tensor.hpp"
#include "hti/trainer.hpp"

namespace hti::testing {

inline const std::vector<std::string>& positive_words() {
  static const std::vector<std::string> w{"great", "excellent", "love", "perfect", "sturdy", "bright", "warm"};
  return w;
}
inline const std::vector<std::string>& negative_words() {
  static const std::vector<std::string> w{"broke", "cheap", "awful", "noisy", "flimsy", "poor", "dull"};
  return w;
}
inline const std::vector<std::string>& neutral_words() {
  static const std::vector<std::string> w{"guitar", "string", "cable", "pedal", "strap",
                                          "tuner",  "sound",  "price", "box",   "case"};
  return w;
}

// Ratings follow user and item offsets plus noise; review words lean
// positive or negative with the rating.
inline std::vector<RawRecord> synthetic_records(std::size_t users, std::size_t items, std::size_t per_user,
                                                std::uint64_t seed, std::size_t words_per_review = 10) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.4);
  std::vector<double> user_offset(users);
  std::vector<double> item_offset(items);
  for (auto& o : user_offset) o = noise(rng) * 2.0;
  for (auto& o : item_offset) o = noise(rng) * 2.0;
  std::vector<RawRecord> records;
  for (std::size_t u = 0; u < users; ++u) {
    std::vector<std::size_t> pool(items);
    for (std::size_t i = 0; i < items; ++i) pool[i] = i;
    std::shuffle(pool.begin(), pool.end(), rng);
    for (std::size_t k = 0; k < std::min(per_user, items); ++k) {
      const std::size_t i = pool[k];
      const double raw = 3.5 + user_offset[u] + item_offset[i] + noise(rng);
      const double rating = std::clamp(std::round(raw), 1.0, 5.0);
      std::string text;
      for (std::size_t w = 0; w < words_per_review; ++w) {
        const auto& bank = (w % 2 == 0) ? (rating >= 4 ? positive_words()
                                                        : (rating <= 2 ? negative_words() : neutral_words()))
                                        : neutral_words();
        text += bank[rng() % bank.size()];
        text += ' ';
      }
      RawRecord r;
      r.user_id = "U" + std::to_string(u);
      r.item_id = "I" + std::to_string(i);
      r.rating = rating;
      r.review_text = text;
      r.timestamp = static_cast<std::int64_t>(1'400'000'000 + rng() % 10'000'000);
      records.push_back(std::move(r));
    }
  }
  return records;
}

inline Corpus synthetic_corpus(std::size_t users, std::size_t items, std::size_t per_user, std::uint64_t seed,
                               SplitRatios ratios = {}) {
  PreprocessConfig cfg;
  cfg.ratios = ratios;
  cfg.seed = seed;
  return ingest_reviews(synthetic_records(users, items, per_user, seed), cfg);
}

inline HyperParams small_hyper_params() {
  HyperParams hp;
  hp.embed_dim = 8;
  hp.conv1_maps = 4;
  hp.latent_dim = 6;
  hp.batch_size = 16;
  hp.threads = 1;
  return hp;
}

inline MatrixRM random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  MatrixRM m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

inline Vec random_vec(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Vec v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

// At least `min_valid` entries set.
inline Mask random_mask(std::size_t n, std::mt19937_64& rng, std::size_t min_valid = 1) {
  Mask m(n, 0);
  for (auto& b : m) b = static_cast<std::uint8_t>(rng() % 4 != 0);
  std::size_t valid = 0;
  for (const auto b : m) valid += b;
  for (std::size_t i = 0; valid < min_valid && i < n; ++i) {
    if (!m[i]) {
      m[i] = 1;
      ++valid;
    }
  }
  return m;
}

// Valid slots first, as produced by example assembly.
inline Mask prefix_mask(std::size_t n, std::size_t valid) {
  Mask m(n, 0);
  for (std::size_t i = 0; i < valid && i < n; ++i) m[i] = 1;
  return m;
}

inline void randomize(ParamTape& tape, std::mt19937_64& rng, double scale = 0.5) {
  std::normal_distribution<double> dist(0.0, scale);
  for (std::size_t i = 0; i < tape.size(); ++i) {
    const std::size_t frozen = tape.frozen_count(i);
    auto values = tape.value_at(i).values();
    for (std::size_t j = frozen; j < values.size(); ++j) values[j] = dist(rng);
  }
}

}  // namespace hti::testing
