#include "hti/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "hti/errors.hpp"

namespace hti {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

constexpr std::size_t kMaxStoredWarnings = 20;

void warn(IngestStats* stats, std::string message) {
  if (stats != nullptr && stats->warnings.size() < kMaxStoredWarnings) stats->warnings.push_back(std::move(message));
}

}  // namespace

std::optional<RawRecord> parse_raw_record(std::string_view line, std::string* error) {
  auto fail = [&](std::string message) -> std::optional<RawRecord> {
    if (error != nullptr) *error = std::move(message);
    return std::nullopt;
  };
  const json doc = json::parse(line.begin(), line.end(), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return fail("not a JSON object");

  RawRecord record;
  const auto user = doc.find("reviewerID");
  const auto item = doc.find("asin");
  const auto rating = doc.find("overall");
  if (user == doc.end() || !user->is_string()) return fail("missing reviewerID");
  if (item == doc.end() || !item->is_string()) return fail("missing asin");
  if (rating == doc.end() || !rating->is_number()) return fail("missing overall");
  record.user_id = user->get<std::string>();
  record.item_id = item->get<std::string>();
  record.rating = rating->get<double>();
  if (record.user_id.empty() || record.item_id.empty()) return fail("empty user or item id");
  if (!(record.rating >= 1.0 && record.rating <= 5.0)) return fail("rating outside [1,5]");

  if (const auto text = doc.find("reviewText"); text != doc.end()) {
    if (!text->is_string()) return fail("reviewText is not a string");
    record.review_text = text->get<std::string>();
  }
  if (const auto time = doc.find("unixReviewTime"); time != doc.end() && !time->is_null()) {
    if (!time->is_number_integer()) return fail("unixReviewTime is not an integer");
    record.timestamp = time->get<std::int64_t>();
  }
  return record;
}

StopwordSet load_stopwords(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open stopword list: " + path);
  StopwordSet words;
  std::string line;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto last = line.find_last_not_of(" \t\r");
    std::string word = line.substr(first, last - first + 1);
    std::transform(word.begin(), word.end(), word.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    words.insert(std::move(word));
  }
  return words;
}

StopwordSet default_stopwords() {
  static constexpr const char* kWords =
    "a about above after again against all am an and any are arent as at be because been before being below "
    "between both but by cant cannot could couldnt did didnt do does doesnt doing dont down during each few for "
    "from further had hadnt has hasnt have havent having he hes her here heres hers herself him "
    "himself his how hows i im ive if in into is isnt it its itself lets me more most mustnt my myself "
    "no nor not of off on once only or other ought our ours ourselves out over own same shant she "
    "shes should shouldnt so some such than that thats the their theirs them themselves then there theres these "
    "they theyd theyll theyre theyve this those through to too under until up very was wasnt we were "
    "weve werent what whats when whens where wheres which while who whos whom why whys with wont would wouldnt "
    "you youd youll youre youve your yours yourself yourselves";
  StopwordSet words;
  std::istringstream in(kWords);
  std::string w;
  while (in >> w) words.insert(w);
  return words;
}

std::vector<std::string> tokenize(std::string_view text, const StopwordSet& stopwords) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    if (!current.empty() && !stopwords.contains(current)) tokens.push_back(current);
    current.clear();
  };
  for (const char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (c == '\'') continue;
    if (c >= 0x80 || std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return tokens;
}

std::string_view split_name(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::unused: return "unused";
  }
  return "unused";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  if (name == "unused") return Split::unused;
  throw std::invalid_argument("unknown split: " + std::string(name));
}

Vocabulary Vocabulary::build(const std::unordered_map<std::string, std::size_t>& counts, std::size_t max_size) {
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (ranked.size() > max_size) ranked.resize(max_size);
  std::vector<std::string> tokens;
  tokens.reserve(ranked.size());
  for (auto& [token, count] : ranked) tokens.push_back(token);
  return from_tokens(std::move(tokens));
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> ordered_tokens) {
  Vocabulary vocab;
  for (auto& token : ordered_tokens) {
    if (token.empty()) throw DataError("vocabulary contains an empty token");
    const auto id = static_cast<std::int32_t>(vocab.id_to_token_.size());
    if (!vocab.token_to_id_.emplace(token, id).second) throw DataError("duplicate vocabulary token: " + token);
    vocab.id_to_token_.push_back(std::move(token));
  }
  return vocab;
}

std::optional<std::int32_t> Vocabulary::lookup(const std::string& token) const {
  const auto it = token_to_id_.find(token);
  if (it == token_to_id_.end()) return std::nullopt;
  return it->second;
}

std::size_t coverage_limit(std::vector<std::size_t> samples, double quantile) {
  if (samples.empty()) return 1;
  std::sort(samples.begin(), samples.end());
  const double position = std::ceil(quantile * static_cast<double>(samples.size()) - 1e-9);
  const std::size_t rank = std::clamp<std::size_t>(static_cast<std::size_t>(position), 1, samples.size());
  return std::max<std::size_t>(1, samples[rank - 1]);
}

std::optional<std::int32_t> Corpus::user_index(const std::string& id) const {
  const auto it = user_lookup_.find(id);
  if (it == user_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::int32_t> Corpus::item_index(const std::string& id) const {
  const auto it = item_lookup_.find(id);
  if (it == item_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> Corpus::find_interaction(std::int32_t user, std::int32_t item) const {
  for (std::size_t i = 0; i < interactions.size(); ++i) {
    if (interactions[i].user == user && interactions[i].item == item) return i;
  }
  return std::nullopt;
}

std::vector<std::size_t> Corpus::split_indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < interactions.size(); ++i) {
    if (interactions[i].split == split) out.push_back(i);
  }
  return out;
}

void Corpus::reindex() {
  user_lookup_.clear();
  item_lookup_.clear();
  for (std::size_t i = 0; i < user_ids.size(); ++i) user_lookup_.emplace(user_ids[i], static_cast<std::int32_t>(i));
  for (std::size_t i = 0; i < item_ids.size(); ++i) item_lookup_.emplace(item_ids[i], static_cast<std::int32_t>(i));

  user_history_.assign(user_ids.size(), {});
  item_history_.assign(item_ids.size(), {});
  for (std::size_t i = 0; i < interactions.size(); ++i) {
    const auto& it = interactions[i];
    if (it.split != Split::train) continue;
    user_history_[it.user].push_back(i);
    item_history_[it.item].push_back(i);
  }
  auto recent_first = [this](std::size_t a, std::size_t b) {
    return interactions[a].timestamp > interactions[b].timestamp;
  };
  for (auto& h : user_history_) std::stable_sort(h.begin(), h.end(), recent_first);
  for (auto& h : item_history_) std::stable_sort(h.begin(), h.end(), recent_first);
}

void Corpus::finalize(IngestStats* stats) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& it : interactions) {
    if (it.split != Split::train) continue;
    for (const auto& token : it.tokens) ++counts[token];
  }
  vocabulary = Vocabulary::build(counts, vocab_capacity);

  std::vector<std::size_t> lengths;
  std::vector<std::size_t> per_user(user_ids.size(), 0);
  std::vector<std::size_t> per_item(item_ids.size(), 0);
  for (auto& it : interactions) {
    it.token_ids.clear();
    for (const auto& token : it.tokens) {
      if (const auto id = vocabulary.lookup(token)) it.token_ids.push_back(*id);
    }
    if (it.split == Split::train) {
      lengths.push_back(it.token_ids.size());
      ++per_user[it.user];
      ++per_item[it.item];
    }
  }
  std::vector<std::size_t> user_counts;
  std::vector<std::size_t> item_counts;
  for (const auto c : per_user) {
    if (c > 0) user_counts.push_back(c);
  }
  for (const auto c : per_item) {
    if (c > 0) item_counts.push_back(c);
  }
  limits.max_review_len = coverage_limit(std::move(lengths), coverage_quantile);
  limits.max_user_reviews = coverage_limit(std::move(user_counts), coverage_quantile);
  limits.max_item_reviews = coverage_limit(std::move(item_counts), coverage_quantile);

  if (stats != nullptr) {
    std::vector<std::uint8_t> cold_user(user_ids.size(), 0);
    std::vector<std::uint8_t> cold_item(item_ids.size(), 0);
    for (const auto& it : interactions) {
      if (it.split != Split::val && it.split != Split::test) continue;
      if (per_user[it.user] == 0) cold_user[it.user] = 1;
      if (per_item[it.item] == 0) cold_item[it.item] = 1;
    }
    stats->cold_users = static_cast<std::size_t>(std::count(cold_user.begin(), cold_user.end(), 1));
    stats->cold_items = static_cast<std::size_t>(std::count(cold_item.begin(), cold_item.end(), 1));
    if (stats->cold_users + stats->cold_items > 0) {
      warn(stats, std::to_string(stats->cold_users) + " users and " + std::to_string(stats->cold_items) +
                      " items appear in val/test without training interactions");
    }
  }
  reindex();
}

Corpus ingest_reviews(const std::vector<RawRecord>& records, const PreprocessConfig& config, IngestStats* stats) {
  Corpus corpus;
  corpus.coverage_quantile = config.coverage_quantile;
  corpus.vocab_capacity = config.vocab_size;
  std::unordered_map<std::string, std::int32_t> users;
  std::unordered_map<std::string, std::int32_t> items;
  for (const auto& record : records) {
    if (stats != nullptr) ++stats->records_read;
    if (record.user_id.empty() || record.item_id.empty() || !(record.rating >= 1.0 && record.rating <= 5.0)) {
      if (stats != nullptr) ++stats->records_skipped;
      warn(stats, "skipped record violating RawRecord invariants");
      continue;
    }
    auto [u, new_user] = users.emplace(record.user_id, static_cast<std::int32_t>(corpus.user_ids.size()));
    if (new_user) corpus.user_ids.push_back(record.user_id);
    auto [v, new_item] = items.emplace(record.item_id, static_cast<std::int32_t>(corpus.item_ids.size()));
    if (new_item) corpus.item_ids.push_back(record.item_id);
    Interaction it;
    it.user = u->second;
    it.item = v->second;
    it.rating = record.rating;
    it.timestamp = record.timestamp.value_or(-1);
    it.tokens = tokenize(record.review_text, config.stopwords);
    corpus.interactions.push_back(std::move(it));
  }
  if (corpus.interactions.empty()) throw DataError("corpus is empty after ingestion");
  corpus = split_dataset(std::move(corpus), config.ratios, config.seed);
  if (stats != nullptr) corpus.finalize(stats);
  return corpus;
}

Corpus ingest_reviews(std::istream& input, const PreprocessConfig& config, IngestStats* stats) {
  std::vector<RawRecord> records;
  std::string line;
  std::size_t line_no = 0;
  std::size_t malformed = 0;
  while (std::getline(input, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::string error;
    if (auto record = parse_raw_record(line, &error)) {
      records.push_back(std::move(*record));
    } else {
      ++malformed;
      warn(stats, "line " + std::to_string(line_no) + ": " + error);
    }
  }
  Corpus corpus = ingest_reviews(records, config, stats);
  if (stats != nullptr) {
    stats->records_read += malformed;
    stats->records_skipped += malformed;
  }
  return corpus;
}

Corpus split_dataset(Corpus corpus, const SplitRatios& ratios, std::uint64_t seed) {
  const double sum = ratios.train + ratios.val + ratios.test;
  if (!(ratios.train > 0.0 && ratios.val > 0.0 && ratios.test > 0.0) || sum > 1.0 + 1e-9) {
    throw std::invalid_argument("split ratios must be positive and sum to at most 1");
  }
  const std::size_t total = corpus.interactions.size();
  if (total < 3) throw DataError("need at least 3 interactions to split");

  const auto count_for = [total](double ratio) {
    return static_cast<std::size_t>(std::llround(ratio * static_cast<double>(total)));
  };
  const std::size_t n_val = std::max<std::size_t>(1, count_for(ratios.val));
  const std::size_t n_test = std::max<std::size_t>(1, count_for(ratios.test));
  const std::size_t room = total - n_val - n_test;
  const std::size_t n_train =
      std::abs(sum - 1.0) <= 1e-9 ? room : std::clamp<std::size_t>(count_for(ratios.train), 1, room);

  // Fisher-Yates with an explicit index draw so the permutation does not
  // depend on the standard library's distribution implementation.
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = total - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(order[i], order[j]);
  }
  for (std::size_t rank = 0; rank < total; ++rank) {
    Split split = Split::unused;
    if (rank < n_train) {
      split = Split::train;
    } else if (rank < n_train + n_val) {
      split = Split::val;
    } else if (rank < n_train + n_val + n_test) {
      split = Split::test;
    }
    corpus.interactions[order[rank]].split = split;
  }
  corpus.finalize();
  return corpus;
}

std::size_t ReviewGrid::valid_reviews() const {
  return static_cast<std::size_t>(std::count(review_mask.begin(), review_mask.end(), 1));
}

namespace {

ReviewGrid fill_grid(const Corpus& corpus, const std::vector<std::size_t>& history, std::size_t slots,
                     std::size_t width, auto&& excluded) {
  ReviewGrid grid;
  grid.rows = slots;
  grid.cols = width;
  grid.tokens.assign(slots * width, Vocabulary::kPadId);
  grid.word_mask.assign(slots * width, 0);
  grid.review_mask.assign(slots, 0);
  grid.source.assign(slots, -1);
  std::size_t row = 0;
  for (const std::size_t idx : history) {
    if (row == slots) break;
    const Interaction& it = corpus.interactions[idx];
    // Reviews left without any in-vocabulary token carry no text.
    if (excluded(it) || it.token_ids.empty()) continue;
    grid.source[row] = static_cast<std::int64_t>(idx);
    const std::size_t len = std::min(width, it.token_ids.size());
    for (std::size_t t = 0; t < len; ++t) {
      grid.tokens[row * width + t] = it.token_ids[t];
      grid.word_mask[row * width + t] = 1;
    }
    grid.review_mask[row] = 1;
    ++row;
  }
  return grid;
}

}  // namespace

TrainingExample assemble_example(const Corpus& corpus, std::int32_t user, std::int32_t item, double rating) {
  if (user < 0 || static_cast<std::size_t>(user) >= corpus.num_users() || item < 0 ||
      static_cast<std::size_t>(item) >= corpus.num_items()) {
    throw std::out_of_range("assemble_example: user or item index out of range");
  }
  TrainingExample ex;
  ex.user = user;
  ex.item = item;
  ex.rating = rating;
  const std::size_t p = corpus.limits.max_review_len;
  ex.user_reviews = fill_grid(corpus, corpus.user_history(user), corpus.limits.max_user_reviews, p,
                              [item](const Interaction& it) { return it.item == item; });
  ex.item_reviews = fill_grid(corpus, corpus.item_history(item), corpus.limits.max_item_reviews, p,
                              [user](const Interaction& it) { return it.user == user; });
  return ex;
}

CorpusSummary summarize(const Corpus& corpus) {
  CorpusSummary s;
  s.users = corpus.num_users();
  s.items = corpus.num_items();
  s.ratings = corpus.interactions.size();
  s.docs_per_user = corpus.limits.max_user_reviews;
  s.docs_per_item = corpus.limits.max_item_reviews;
  s.words_per_doc = corpus.limits.max_review_len;
  s.vocabulary = corpus.vocabulary.size();
  std::size_t words = 0;
  for (const auto& it : corpus.interactions) {
    words += it.token_ids.size();
    switch (it.split) {
      case Split::train: ++s.train; break;
      case Split::val: ++s.val; break;
      case Split::test: ++s.test; break;
      case Split::unused: ++s.unused; break;
    }
  }
  if (s.users > 0) s.mean_docs_per_user = static_cast<double>(s.ratings) / static_cast<double>(s.users);
  if (s.items > 0) s.mean_docs_per_item = static_cast<double>(s.ratings) / static_cast<double>(s.items);
  if (s.ratings > 0) s.mean_words_per_doc = static_cast<double>(words) / static_cast<double>(s.ratings);
  if (s.users > 0 && s.items > 0) {
    s.density = static_cast<double>(s.ratings) / (static_cast<double>(s.users) * static_cast<double>(s.items));
  }
  return s;
}

std::string serialize_corpus(const Corpus& corpus) {
  ordered_json doc;
  doc["format_version"] = kCorpusFormatVersion;
  doc["coverage_quantile"] = corpus.coverage_quantile;
  doc["vocab_capacity"] = corpus.vocab_capacity;
  doc["limits"] = {{"max_review_len", corpus.limits.max_review_len},
                   {"max_user_reviews", corpus.limits.max_user_reviews},
                   {"max_item_reviews", corpus.limits.max_item_reviews}};
  doc["users"] = corpus.user_ids;
  doc["items"] = corpus.item_ids;
  doc["vocabulary"] = corpus.vocabulary.tokens();
  ordered_json rows = ordered_json::array();
  for (const auto& it : corpus.interactions) {
    ordered_json row;
    row["user"] = it.user;
    row["item"] = it.item;
    row["rating"] = it.rating;
    row["timestamp"] = it.timestamp;
    row["split"] = split_name(it.split);
    row["tokens"] = it.tokens;
    rows.push_back(std::move(row));
  }
  doc["interactions"] = std::move(rows);
  return doc.dump();
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file: " + path);
  out << serialize_corpus(corpus) << '\n';
  if (!out) throw DataError("failed writing corpus file: " + path);
}

Corpus deserialize_corpus(const std::string& text) {
  const json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw DataError("corpus file is not valid JSON");
  try {
    const int version = doc.at("format_version").get<int>();
    if (version != kCorpusFormatVersion) {
      throw DataError("unsupported corpus format version " + std::to_string(version));
    }
    Corpus corpus;
    corpus.coverage_quantile = doc.at("coverage_quantile").get<double>();
    corpus.vocab_capacity = doc.at("vocab_capacity").get<std::size_t>();
    const auto& limits = doc.at("limits");
    corpus.limits.max_review_len = limits.at("max_review_len").get<std::size_t>();
    corpus.limits.max_user_reviews = limits.at("max_user_reviews").get<std::size_t>();
    corpus.limits.max_item_reviews = limits.at("max_item_reviews").get<std::size_t>();
    corpus.user_ids = doc.at("users").get<std::vector<std::string>>();
    corpus.item_ids = doc.at("items").get<std::vector<std::string>>();
    corpus.vocabulary = Vocabulary::from_tokens(doc.at("vocabulary").get<std::vector<std::string>>());
    for (const auto& row : doc.at("interactions")) {
      Interaction it;
      it.user = row.at("user").get<std::int32_t>();
      it.item = row.at("item").get<std::int32_t>();
      it.rating = row.at("rating").get<double>();
      it.timestamp = row.at("timestamp").get<std::int64_t>();
      it.split = parse_split(row.at("split").get<std::string>());
      it.tokens = row.at("tokens").get<std::vector<std::string>>();
      if (it.user < 0 || static_cast<std::size_t>(it.user) >= corpus.user_ids.size() || it.item < 0 ||
          static_cast<std::size_t>(it.item) >= corpus.item_ids.size()) {
        throw DataError("interaction references an unknown user or item");
      }
      for (const auto& token : it.tokens) {
        if (const auto id = corpus.vocabulary.lookup(token)) it.token_ids.push_back(*id);
      }
      corpus.interactions.push_back(std::move(it));
    }
    if (corpus.interactions.empty()) throw DataError("corpus file has no interactions");
    corpus.reindex();
    return corpus;
  } catch (const json::exception& e) {
    throw DataError(std::string("corpus file is missing fields: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(e.what());
  }
}

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return deserialize_corpus(buffer.str());
}

}  // namespace hti
