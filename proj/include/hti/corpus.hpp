// Review ingestion: text normalization, vocabulary, padding limits, random
// splits and leave-target-review-out example assembly.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "hti/tensor.hpp"

namespace hti {

struct RawRecord {
  std::string user_id;
  std::string item_id;
  double rating = 0.0;
  std::string review_text;
  std::optional<std::int64_t> timestamp;
};

// Parses one line of the Amazon 5-core schema (reviewerID, asin, overall,
// reviewText, unixReviewTime). Returns nullopt and fills `error` when the line
// is malformed or violates the record invariants.
std::optional<RawRecord> parse_raw_record(std::string_view line, std::string* error = nullptr);

using StopwordSet = std::unordered_set<std::string>;

// One stopword per line; blank lines and lines starting with '#' ignored.
StopwordSet load_stopwords(const std::string& path);
// Built-in English list, already in tokenizer form (apostrophes removed).
StopwordSet default_stopwords();

// Lowercases, drops apostrophes, turns every other non-alphanumeric ASCII
// character into a separator, splits on whitespace and removes stopwords.
std::vector<std::string> tokenize(std::string_view text, const StopwordSet& stopwords);

enum class Split : std::uint8_t { train = 0, val = 1, test = 2, unused = 3 };

std::string_view split_name(Split split);
Split parse_split(std::string_view name);

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

class Vocabulary {
 public:
  static constexpr std::int32_t kPadId = 0;

  Vocabulary() : id_to_token_{""} {}

  // Keeps the `max_size` most frequent tokens; ties broken lexicographically.
  // Ids are assigned 1..|vocab| in that order.
  static Vocabulary build(const std::unordered_map<std::string, std::size_t>& counts, std::size_t max_size);
  static Vocabulary from_tokens(std::vector<std::string> ordered_tokens);

  std::size_t size() const { return id_to_token_.size() - 1; }
  std::optional<std::int32_t> lookup(const std::string& token) const;
  const std::string& token(std::int32_t id) const { return id_to_token_.at(static_cast<std::size_t>(id)); }
  // Tokens for ids 1..size() in id order.
  std::vector<std::string> tokens() const { return {id_to_token_.begin() + 1, id_to_token_.end()}; }

 private:
  std::unordered_map<std::string, std::int32_t> token_to_id_;
  std::vector<std::string> id_to_token_;
};

struct PaddingLimits {
  std::size_t max_review_len = 1;    // p
  std::size_t max_user_reviews = 1;  // m
  std::size_t max_item_reviews = 1;  // n
};

// Smallest value covering `quantile` of the samples: the ceil(q * count)-th
// order statistic (1-based). Empty input or a zero result gives 1.
std::size_t coverage_limit(std::vector<std::size_t> samples, double quantile);

struct Interaction {
  std::int32_t user = 0;
  std::int32_t item = 0;
  double rating = 0.0;
  std::int64_t timestamp = -1;  // -1 when absent
  std::vector<std::string> tokens;     // normalized, stopwords removed
  std::vector<std::int32_t> token_ids;  // tokens in the vocabulary
  Split split = Split::train;
};

struct PreprocessConfig {
  StopwordSet stopwords;
  std::size_t vocab_size = 20000;
  double coverage_quantile = 0.90;
  SplitRatios ratios;
  std::uint64_t seed = 1;
};

struct IngestStats {
  std::size_t records_read = 0;
  std::size_t records_skipped = 0;
  std::vector<std::string> warnings;  // first few diagnostics only
  std::size_t cold_users = 0;  // users absent from train but present in val/test
  std::size_t cold_items = 0;
};

class Corpus {
 public:
  std::vector<std::string> user_ids;
  std::vector<std::string> item_ids;
  std::vector<Interaction> interactions;
  Vocabulary vocabulary;
  PaddingLimits limits;
  double coverage_quantile = 0.90;
  std::size_t vocab_capacity = 20000;

  std::size_t num_users() const { return user_ids.size(); }
  std::size_t num_items() const { return item_ids.size(); }

  std::optional<std::int32_t> user_index(const std::string& id) const;
  std::optional<std::int32_t> item_index(const std::string& id) const;
  // First interaction for the (user, item) pair, if any.
  std::optional<std::size_t> find_interaction(std::int32_t user, std::int32_t item) const;
  std::vector<std::size_t> split_indices(Split split) const;

  // Training-split interactions of a user/item, most recent first
  // (timestamp descending, corpus order for ties or missing timestamps).
  const std::vector<std::size_t>& user_history(std::int32_t user) const { return user_history_[user]; }
  const std::vector<std::size_t>& item_history(std::int32_t item) const { return item_history_[item]; }

  // Rebuilds vocabulary, token ids, padding limits and histories from the
  // current split assignment. Called after any split change.
  void finalize(IngestStats* stats = nullptr);
  // Rebuilds id lookups and histories only (vocabulary kept as is).
  void reindex();

 private:
  std::unordered_map<std::string, std::int32_t> user_lookup_;
  std::unordered_map<std::string, std::int32_t> item_lookup_;
  std::vector<std::vector<std::size_t>> user_history_;
  std::vector<std::vector<std::size_t>> item_history_;
};

// Parses, normalizes and splits the records, then builds vocabulary and
// padding limits from the training split. Throws DataError when no usable
// record remains.
Corpus ingest_reviews(const std::vector<RawRecord>& records, const PreprocessConfig& config,
                      IngestStats* stats = nullptr);
// Newline-delimited JSON stream; malformed lines are skipped and counted.
Corpus ingest_reviews(std::istream& input, const PreprocessConfig& config, IngestStats* stats = nullptr);

// Deterministic random assignment of interactions to splits. Ratios may sum
// to less than one (reduced training ratios); the remainder is marked unused.
// Throws DataError for fewer than 3 interactions, std::invalid_argument for
// bad ratios.
Corpus split_dataset(Corpus corpus, const SplitRatios& ratios, std::uint64_t seed);

struct ReviewGrid {
  std::size_t rows = 0;  // review slots
  std::size_t cols = 0;  // tokens per review
  std::vector<std::int32_t> tokens;        // rows * cols, 0 at padding
  Mask word_mask;                          // rows * cols
  Mask review_mask;                        // rows
  std::vector<std::int64_t> source;        // interaction index per slot, -1 when empty

  std::span<const std::int32_t> review_tokens(std::size_t r) const { return {tokens.data() + r * cols, cols}; }
  std::span<const std::uint8_t> review_word_mask(std::size_t r) const {
    return {word_mask.data() + r * cols, cols};
  }
  std::size_t valid_reviews() const;
};

struct TrainingExample {
  std::int32_t user = 0;
  std::int32_t item = 0;
  double rating = 0.0;
  ReviewGrid user_reviews;  // m x p
  ReviewGrid item_reviews;  // n x p
};

// Builds the padded review sets for a pair, excluding every review written by
// `user` about `item`. Only training-split reviews are used.
TrainingExample assemble_example(const Corpus& corpus, std::int32_t user, std::int32_t item, double rating);

// Column definitions of the dataset statistics table.
struct CorpusSummary {
  std::size_t users = 0;
  std::size_t items = 0;
  std::size_t ratings = 0;
  std::size_t docs_per_user = 0;  // m at the coverage quantile
  std::size_t docs_per_item = 0;  // n at the coverage quantile
  std::size_t words_per_doc = 0;  // p at the coverage quantile
  double mean_docs_per_user = 0.0;
  double mean_docs_per_item = 0.0;
  double mean_words_per_doc = 0.0;
  double density = 0.0;  // ratings / (users * items)
  std::size_t vocabulary = 0;
  std::size_t train = 0, val = 0, test = 0, unused = 0;
};

CorpusSummary summarize(const Corpus& corpus);

inline constexpr int kCorpusFormatVersion = 1;

void save_corpus(const Corpus& corpus, const std::string& path);
std::string serialize_corpus(const Corpus& corpus);
Corpus load_corpus(const std::string& path);
Corpus deserialize_corpus(const std::string& text);

}  // namespace hti
