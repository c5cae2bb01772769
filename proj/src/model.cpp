#include "hti/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "hti/errors.hpp"

namespace hti {

using json = nlohmann::json;

std::string_view variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::wavg: return "wavg";
    case Variant::wmax: return "wmax";
    case Variant::davg: return "davg";
    case Variant::dmax: return "dmax";
  }
  return "full";
}

Variant parse_variant(std::string_view name) {
  for (const Variant v : {Variant::full, Variant::wavg, Variant::wmax, Variant::davg, Variant::dmax}) {
    if (name == variant_name(v)) return v;
  }
  throw UsageError("unknown variant '" + std::string(name) + "' (expected full, wavg, wmax, davg or dmax)");
}

namespace {

void glorot_uniform(Tensor& t, std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(t.rows());
  const double fan_out = static_cast<double>(t.cols());
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& v : t.values()) v = dist(rng);
}

bool is_word_pooling(Variant v) { return v == Variant::wavg || v == Variant::wmax; }
bool is_review_pooling(Variant v) { return v == Variant::davg || v == Variant::dmax; }

}  // namespace

HtiModel::HtiModel(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  if (config_.attention_hidden == 0) config_.attention_hidden = config_.latent_dim;
  if (!(config_.dropout >= 0.0 && config_.dropout < 1.0)) throw std::invalid_argument("dropout must be in [0, 1)");
  word_ = register_word_encoder(params_, {config_.vocab_size, config_.embed_dim, config_.conv1_maps, config_.latent_dim});
  interaction_ = register_interaction(params_, config_.latent_dim, config_.attention_hidden);
  predictor_ = register_predictor(params_, {config_.num_users, config_.num_items, config_.latent_dim});

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> embed_dist(-0.05, 0.05);
  std::normal_distribution<double> latent_dist(0.0, 0.1);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& t = params_.value_at(i);
    const std::string& name = params_.name(i);
    if (i == word_.embedding.index) {
      for (std::size_t j = params_.frozen_count(i); j < t.size(); ++j) t[j] = embed_dist(rng);
    } else if (i == predictor_.user_factors.index || i == predictor_.item_factors.index) {
      for (double& v : t.values()) v = latent_dist(rng);
    } else if (t.shape().size() == 2) {
      glorot_uniform(t, rng);
    } else if (name.ends_with(".v")) {
      // Attention context vectors start random so the relevance scores are not
      // identically zero.
      glorot_uniform(t, rng);
    } else {
      t.fill(0.0);
    }
  }
}

void HtiModel::set_output_bias(double value) { params_.value(predictor_.biases.back())[0] = value; }

void HtiModel::encode_side(const ReviewGrid& grid, const Vec& query, bool uniform, SideTrace& side) const {
  const auto k = static_cast<Eigen::Index>(config_.latent_dim);
  side.words.assign(grid.rows, WordEncoding{});
  side.reps.assign(grid.rows, ReviewRep{});
  side.rep_matrix = MatrixRM::Zero(static_cast<Eigen::Index>(grid.rows), k);
  side.mask = grid.review_mask;
  for (std::size_t r = 0; r < grid.rows; ++r) {
    if (!grid.review_mask[r]) {
      side.reps[r].d = Vec::Zero(k);
      continue;
    }
    const auto tokens = grid.review_tokens(r);
    const auto mask = grid.review_word_mask(r);
    side.words[r] = encode_words(tokens, mask, params_, word_);
    const MatrixRM& words = side.words[r].out2;
    ReviewRep rep;
    if (config_.variant == Variant::wavg || uniform) {
      rep = mean_pool_words(words, mask);
    } else if (config_.variant == Variant::wmax) {
      rep = max_pool_words(words, mask);
    } else {
      rep = pair_attention_summarize(words, mask, query);
    }
    side.rep_matrix.row(static_cast<Eigen::Index>(r)) = rep.d.transpose();
    if (!rep.valid) side.mask[r] = 0;
    side.reps[r] = std::move(rep);
  }
}

ForwardTrace HtiModel::forward(const TrainingExample& example, const ForwardOptions& options) const {
  ForwardTrace tr;
  tr.uniform_word_attention = options.uniform_word_attention;
  tr.user_latent = params_.value(predictor_.user_factors).matrix().row(example.user).transpose();
  tr.item_latent = params_.value(predictor_.item_factors).matrix().row(example.item).transpose();
  tr.query = pair_query(tr.user_latent, tr.item_latent, params_, word_);

  encode_side(example.user_reviews, tr.query.m, options.uniform_word_attention, tr.user);
  encode_side(example.item_reviews, tr.query.m, options.uniform_word_attention, tr.item);

  if (config_.variant == Variant::davg) {
    tr.pooled_user = mean_pool_words(tr.user.rep_matrix, tr.user.mask);
    tr.pooled_item = mean_pool_words(tr.item.rep_matrix, tr.item.mask);
  } else if (config_.variant == Variant::dmax) {
    tr.pooled_user = max_pool_words(tr.user.rep_matrix, tr.user.mask);
    tr.pooled_item = max_pool_words(tr.item.rep_matrix, tr.item.mask);
  }
  if (is_review_pooling(config_.variant)) {
    tr.d_user = tr.pooled_user.d;
    tr.d_item = tr.pooled_item.d;
  } else {
    tr.interaction = aggregate(tr.user.rep_matrix, tr.item.rep_matrix, tr.user.mask, tr.item.mask, params_,
                               interaction_);
    tr.d_user = tr.interaction.d_user;
    tr.d_item = tr.interaction.d_item;
  }

  tr.combined = combine(tr.user_latent, tr.d_user, tr.item_latent, tr.d_item);
  tr.prediction = hti::predict(tr.combined.h0, params_, predictor_, options.train, config_.dropout, options.rng,
                               &tr.mlp);
  return tr;
}

void HtiModel::backward_side(const SideTrace& side, const ReviewGrid& grid, const Vec& query, bool uniform,
                             const MatrixRM& drep, GradientSet& grads, Vec& dquery) const {
  for (std::size_t r = 0; r < grid.rows; ++r) {
    if (!side.mask[r]) continue;
    const Vec dd = drep.row(static_cast<Eigen::Index>(r)).transpose();
    if (dd.isZero(0.0)) continue;
    const auto tokens = grid.review_tokens(r);
    const auto mask = grid.review_word_mask(r);
    const MatrixRM& words = side.words[r].out2;
    MatrixRM dwords = MatrixRM::Zero(words.rows(), words.cols());
    if (config_.variant == Variant::wavg || uniform) {
      mean_pool_backward(mask, side.reps[r], dd, dwords);
    } else if (config_.variant == Variant::wmax) {
      max_pool_backward(words, mask, dd, dwords);
    } else {
      pair_attention_backward(words, mask, query, side.reps[r], dd, dwords, dquery);
    }
    encode_words_backward(side.words[r], tokens, mask, dwords, params_, word_, grads);
  }
}

void HtiModel::backward(const ForwardTrace& tr, const TrainingExample& example, double dprediction,
                        GradientSet& grads) const {
  const auto k = static_cast<Eigen::Index>(config_.latent_dim);
  const Vec dh0 = predict_backward(tr.mlp, dprediction, params_, predictor_, grads);
  const auto [dx, dy] = combine_backward(tr.combined, dh0);
  Vec du = dx;
  Vec dv = dy;

  MatrixRM duser = MatrixRM::Zero(tr.user.rep_matrix.rows(), k);
  MatrixRM ditem = MatrixRM::Zero(tr.item.rep_matrix.rows(), k);
  if (config_.variant == Variant::davg) {
    mean_pool_backward(tr.user.mask, tr.pooled_user, dx, duser);
    mean_pool_backward(tr.item.mask, tr.pooled_item, dy, ditem);
  } else if (config_.variant == Variant::dmax) {
    max_pool_backward(tr.user.rep_matrix, tr.user.mask, dx, duser);
    max_pool_backward(tr.item.rep_matrix, tr.item.mask, dy, ditem);
  } else {
    aggregate_backward(tr.interaction, tr.user.rep_matrix, tr.item.rep_matrix, tr.user.mask, tr.item.mask, dx, dy,
                       params_, interaction_, grads, duser, ditem);
  }

  Vec dquery = Vec::Zero(k);
  backward_side(tr.user, example.user_reviews, tr.query.m, tr.uniform_word_attention, duser, grads, dquery);
  backward_side(tr.item, example.item_reviews, tr.query.m, tr.uniform_word_attention, ditem, grads, dquery);
  if (!is_word_pooling(config_.variant) && !tr.uniform_word_attention) {
    const Vec dconcat = pair_query_backward(tr.query, dquery, params_, word_, grads);
    du += dconcat.head(k);
    dv += dconcat.tail(k);
  }
  grads[predictor_.user_factors].matrix().row(example.user) += du.transpose();
  grads[predictor_.item_factors].matrix().row(example.item) += dv.transpose();
}

std::size_t HtiModel::load_embeddings(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file: " + path);
  MatMap table = params_.value(word_.embedding).matrix();
  std::vector<std::uint8_t> seen(vocab.size() + 1, 0);
  std::size_t loaded = 0;
  std::string line;
  std::string token;
  std::vector<double> values;
  values.reserve(config_.embed_dim);
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    if (!(fields >> token)) continue;
    const auto id = vocab.lookup(token);
    if (!id || seen[static_cast<std::size_t>(*id)]) continue;
    values.clear();
    double v = 0.0;
    while (fields >> v) values.push_back(v);
    if (values.size() != config_.embed_dim) continue;
    for (std::size_t j = 0; j < values.size(); ++j) table(*id, static_cast<Eigen::Index>(j)) = values[j];
    seen[static_cast<std::size_t>(*id)] = 1;
    ++loaded;
  }
  return loaded;
}

namespace {

constexpr char kMagic[8] = {'H', 'T', 'I', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw DataError("checkpoint is truncated");
  return value;
}

json config_to_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size}, {"num_users", c.num_users},   {"num_items", c.num_items},
          {"embed_dim", c.embed_dim},   {"conv1_maps", c.conv1_maps}, {"latent_dim", c.latent_dim},
          {"attention_hidden", c.attention_hidden}, {"dropout", c.dropout},
          {"variant", std::string(variant_name(c.variant))}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.num_users = j.at("num_users").get<std::size_t>();
  c.num_items = j.at("num_items").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.conv1_maps = j.at("conv1_maps").get<std::size_t>();
  c.latent_dim = j.at("latent_dim").get<std::size_t>();
  c.attention_hidden = j.at("attention_hidden").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.variant = parse_variant(j.at("variant").get<std::string>());
  return c;
}

}  // namespace

void save_checkpoint(const HtiModel& model, const std::string& path, const std::string& metadata_json) {
  json meta = json::parse(metadata_json, nullptr, false);
  if (meta.is_discarded() || !meta.is_object()) throw std::invalid_argument("checkpoint metadata must be a JSON object");
  json header = {{"model", config_to_json(model.config())}, {"metadata", meta}};
  const std::string header_text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kCheckpointFormatVersion);
  write_pod(out, static_cast<std::uint64_t>(header_text.size()));
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  const ParamTape& params = model.params();
  write_pod(out, static_cast<std::uint64_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params.name(i);
    const Tensor& t = params.value_at(i);
    write_pod(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(out, static_cast<std::uint32_t>(t.shape().size()));
    for (const auto d : t.shape()) write_pod(out, static_cast<std::uint64_t>(d));
    out.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw DataError("failed writing checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw DataError("not a checkpoint file: " + path);
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kCheckpointFormatVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto header_len = read_pod<std::uint64_t>(in);
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw DataError("checkpoint is truncated");
  const json header = json::parse(header_text, nullptr, false);
  if (header.is_discarded()) throw DataError("checkpoint header is not valid JSON");

  ModelConfig config;
  try {
    config = config_from_json(header.at("model"));
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint header incomplete: ") + e.what());
  }
  LoadedCheckpoint loaded{HtiModel(config, 0), header.value("metadata", json::object()).dump()};
  ParamTape& params = loaded.model.params();
  const auto count = read_pod<std::uint64_t>(in);
  if (count != params.size()) throw DataError("checkpoint tensor count does not match the model");
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto ndim = read_pod<std::uint32_t>(in);
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = static_cast<std::size_t>(read_pod<std::uint64_t>(in));
    const auto id = params.find(name);
    if (!id) throw DataError("checkpoint has unknown tensor " + name);
    Tensor& t = params.value(*id);
    if (t.shape() != shape) throw DataError("checkpoint tensor " + name + " has the wrong shape");
    in.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!in) throw DataError("checkpoint is truncated");
  }
  return loaded;
}

}  // namespace hti
