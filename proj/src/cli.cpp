#include "hti/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "hti/baseline.hpp"
#include "hti/corpus.hpp"
#include "hti/errors.hpp"
#include "hti/evaluator.hpp"
#include "hti/model.hpp"
#include "hti/trainer.hpp"

namespace hti {

namespace {

namespace fs = std::filesystem;
using Json = nlohmann::json;

enum class Kind { integer, real, text, boolean, real_list, int_list, text_list };

struct KeySpec {
  const char* key;
  Kind kind;
  const char* help;
};

// Every key accepted in a config file. Each one is also a flag
// (`learning_rate` -> `--learning-rate`) on the subcommands that use it.
const std::vector<KeySpec>& key_specs() {
  static const std::vector<KeySpec> specs = {
      {"input", Kind::text, "raw review file (one JSON object per line)"},
      {"corpus", Kind::text, "preprocessed corpus file"},
      {"checkpoint", Kind::text, "model checkpoint file"},
      {"embeddings", Kind::text, "pretrained word vectors (text, one token per line)"},
      {"stopwords", Kind::text, "stopword list, one word per line (default: built-in English list)"},
      {"output_dir", Kind::text, "directory for relative output paths"},
      {"log", Kind::text, "epoch log file (NDJSON)"},
      {"vocab_size", Kind::integer, "vocabulary capacity"},
      {"coverage_quantile", Kind::real, "quantile used for the padding limits"},
      {"train_ratio", Kind::real, "training fraction"},
      {"val_ratio", Kind::real, "validation fraction"},
      {"test_ratio", Kind::real, "test fraction"},
      {"train_ratios", Kind::real_list, "training fractions for a ratio sweep"},
      {"seed", Kind::integer, "random seed"},
      {"seeds", Kind::int_list, "seeds for repeated runs"},
      {"threads", Kind::integer, "worker threads (0 = hardware count, 1 = deterministic)"},
      {"batch_size", Kind::integer, "mini-batch size"},
      {"learning_rate", Kind::real, "Adam learning rate"},
      {"lambda", Kind::real, "L2 regularization weight"},
      {"lambda_grid", Kind::real_list, "candidate regularization weights, picked by validation MAE"},
      {"dropout", Kind::real, "dropout rate of the prediction layers"},
      {"embed_dim", Kind::integer, "word embedding width"},
      {"conv1_maps", Kind::integer, "feature maps per first-layer kernel"},
      {"latent_dim", Kind::integer, "latent factor width"},
      {"max_epochs", Kind::integer, "epoch limit"},
      {"patience", Kind::integer, "epochs without validation improvement before stopping"},
      {"grad_clip", Kind::real, "global gradient-norm clip (0 disables)"},
      {"variant", Kind::text, "full, wavg, wmax, davg or dmax"},
      {"variants", Kind::text_list, "variants to compare"},
      {"init_output_bias", Kind::boolean, "start the output bias at the mean training rating"},
      {"split", Kind::text, "train, val or test"},
      {"top", Kind::integer, "reviews reported per side"},
      {"bench_m", Kind::int_list, "user review counts"},
      {"bench_n", Kind::int_list, "item review counts"},
      {"bench_k", Kind::int_list, "latent widths"},
      {"bench_repeats", Kind::integer, "calls per timing"},
      {"bench_trials", Kind::integer, "timings per configuration (fastest kept)"},
  };
  return specs;
}

const KeySpec* find_spec(const std::string& key) {
  for (const auto& s : key_specs()) {
    if (key == s.key) return &s;
  }
  return nullptr;
}

std::string flag_name(const std::string& key) {
  std::string out = "--" + key;
  std::replace(out.begin(), out.end(), '_', '-');
  return out;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

long long parse_int(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw UsageError(key + ": expected an integer, got '" + text + "'");
  return v;
}

double parse_real(const std::string& key, const std::string& text) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw UsageError(key + ": expected a number, got '" + text + "'");
  return v;
}

const char* type_label(Kind kind) {
  switch (kind) {
    case Kind::integer:
      return "INT";
    case Kind::real:
      return "NUM";
    case Kind::text:
      return "TEXT";
    case Kind::boolean:
      return "BOOL";
    case Kind::real_list:
      return "NUM,...";
    case Kind::int_list:
      return "INT,...";
    case Kind::text_list:
      return "TEXT,...";
  }
  return "";
}

Json flag_to_json(const KeySpec& spec, const std::string& text) {
  switch (spec.kind) {
    case Kind::integer:
      return parse_int(spec.key, text);
    case Kind::real:
      return parse_real(spec.key, text);
    case Kind::text:
      return text;
    case Kind::boolean:
      if (text == "true" || text == "1") return true;
      if (text == "false" || text == "0") return false;
      throw UsageError(std::string(spec.key) + ": expected true or false");
    case Kind::real_list: {
      Json arr = Json::array();
      for (const auto& p : split_list(text)) arr.push_back(parse_real(spec.key, p));
      return arr;
    }
    case Kind::int_list: {
      Json arr = Json::array();
      for (const auto& p : split_list(text)) arr.push_back(parse_int(spec.key, p));
      return arr;
    }
    case Kind::text_list: {
      Json arr = Json::array();
      for (const auto& p : split_list(text)) arr.push_back(p);
      return arr;
    }
  }
  return nullptr;
}

void check_type(const KeySpec& spec, const Json& v) {
  auto all_of = [&](auto pred) {
    if (!v.is_array()) return false;
    for (const auto& e : v) {
      if (!pred(e)) return false;
    }
    return true;
  };
  bool ok = false;
  switch (spec.kind) {
    case Kind::integer:
      ok = v.is_number_integer();
      break;
    case Kind::real:
      ok = v.is_number();
      break;
    case Kind::text:
      ok = v.is_string();
      break;
    case Kind::boolean:
      ok = v.is_boolean();
      break;
    case Kind::real_list:
      ok = all_of([](const Json& e) { return e.is_number(); });
      break;
    case Kind::int_list:
      ok = all_of([](const Json& e) { return e.is_number_integer(); });
      break;
    case Kind::text_list:
      ok = all_of([](const Json& e) { return e.is_string(); });
      break;
  }
  if (!ok) throw UsageError(std::string("config key '") + spec.key + "' has the wrong type");
}

Json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file: " + path);
  Json cfg;
  try {
    cfg = Json::parse(in);
  } catch (const Json::exception& e) {
    throw UsageError("config file is not valid JSON: " + path);
  }
  if (!cfg.is_object()) throw UsageError("config file must hold a JSON object: " + path);
  for (const auto& [key, value] : cfg.items()) {
    const KeySpec* spec = find_spec(key);
    if (!spec) throw UsageError("unknown config key: " + key);
    check_type(*spec, value);
  }
  return cfg;
}

// Flattened view of config file plus flag overrides.
class Settings {
 public:
  explicit Settings(Json values) : values_(std::move(values)) {}

  bool has(const std::string& key) const { return values_.contains(key); }

  std::string text(const std::string& key, const std::string& fallback = {}) const {
    return has(key) ? values_.at(key).get<std::string>() : fallback;
  }
  std::string required_text(const std::string& key) const {
    if (!has(key)) throw UsageError("missing required setting " + flag_name(key));
    return text(key);
  }
  long long integer(const std::string& key, long long fallback) const {
    return has(key) ? values_.at(key).get<long long>() : fallback;
  }
  std::size_t count(const std::string& key, std::size_t fallback) const {
    const long long v = integer(key, static_cast<long long>(fallback));
    if (v < 0) throw UsageError(flag_name(key) + " must be non-negative");
    return static_cast<std::size_t>(v);
  }
  double real(const std::string& key, double fallback) const {
    return has(key) ? values_.at(key).get<double>() : fallback;
  }
  bool boolean(const std::string& key, bool fallback) const {
    return has(key) ? values_.at(key).get<bool>() : fallback;
  }
  template <typename T>
  std::vector<T> list(const std::string& key, std::vector<T> fallback) const {
    return has(key) ? values_.at(key).get<std::vector<T>>() : fallback;
  }

  // Relative output paths are placed under `output_dir` when it is set.
  std::string output_path(const std::string& path) const {
    const std::string dir = text("output_dir");
    if (dir.empty() || fs::path(path).is_absolute()) return path;
    return (fs::path(dir) / path).string();
  }

  HyperParams hyper_params() const {
    HyperParams hp;
    hp.batch_size = count("batch_size", hp.batch_size);
    hp.learning_rate = real("learning_rate", hp.learning_rate);
    hp.lambda = real("lambda", hp.lambda);
    hp.dropout = real("dropout", hp.dropout);
    hp.embed_dim = count("embed_dim", hp.embed_dim);
    hp.conv1_maps = count("conv1_maps", hp.conv1_maps);
    hp.latent_dim = count("latent_dim", hp.latent_dim);
    hp.max_epochs = count("max_epochs", hp.max_epochs);
    hp.patience = count("patience", hp.patience);
    hp.seed = static_cast<std::uint64_t>(integer("seed", static_cast<long long>(hp.seed)));
    hp.grad_clip = real("grad_clip", hp.grad_clip);
    hp.threads = count("threads", 0);
    hp.variant = parse_variant(text("variant", "full"));
    hp.init_output_bias = boolean("init_output_bias", hp.init_output_bias);
    hp.embeddings_path = text("embeddings");
    validate(hp);
    return hp;
  }

  SplitRatios ratios() const {
    SplitRatios r;
    r.train = real("train_ratio", r.train);
    r.val = real("val_ratio", r.val);
    r.test = real("test_ratio", r.test);
    return r;
  }

 private:
  Json values_;
};

void require_file(const std::string& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw DataError(what + " not found: " + path);
}

void require_writable_parent(const std::string& path) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) throw DataError("output directory does not exist: " + parent.string());
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << text;
  if (!out) throw DataError("failed writing " + path);
}

std::string summary_json(const Corpus& corpus, const IngestStats* stats) {
  const CorpusSummary s = summarize(corpus);
  nlohmann::ordered_json j;
  j["users"] = s.users;
  j["items"] = s.items;
  j["ratings"] = s.ratings;
  j["docs_per_user"] = s.docs_per_user;
  j["docs_per_item"] = s.docs_per_item;
  j["words_per_doc"] = s.words_per_doc;
  j["mean_docs_per_user"] = s.mean_docs_per_user;
  j["mean_docs_per_item"] = s.mean_docs_per_item;
  j["mean_words_per_doc"] = s.mean_words_per_doc;
  j["density"] = s.density;
  j["vocabulary"] = s.vocabulary;
  j["train"] = s.train;
  j["val"] = s.val;
  j["test"] = s.test;
  j["unused"] = s.unused;
  if (stats) {
    j["records_read"] = stats->records_read;
    j["records_skipped"] = stats->records_skipped;
    j["cold_users"] = stats->cold_users;
    j["cold_items"] = stats->cold_items;
  }
  return j.dump();
}

Corpus load_checked_corpus(const Settings& st) {
  const std::string path = st.required_text("corpus");
  require_file(path, "corpus file");
  return load_corpus(path);
}

HtiModel load_checked_model(const Settings& st, const Corpus& corpus) {
  const std::string path = st.required_text("checkpoint");
  require_file(path, "checkpoint");
  LoadedCheckpoint ckpt = load_checkpoint(path);
  const ModelConfig& c = ckpt.model.config();
  if (c.num_users != corpus.num_users() || c.num_items != corpus.num_items() ||
      c.vocab_size != std::max<std::size_t>(1, corpus.vocabulary.size())) {
    throw DataError("checkpoint does not match the corpus (users, items or vocabulary differ)");
  }
  return std::move(ckpt.model);
}

int cmd_ingest(const Settings& st, std::ostream& out) {
  const std::string input = st.required_text("input");
  const std::string dest = st.output_path(st.required_text("out"));
  require_file(input, "input file");
  if (st.has("stopwords")) require_file(st.text("stopwords"), "stopword list");
  require_writable_parent(dest);

  PreprocessConfig cfg;
  cfg.stopwords = st.has("stopwords") ? load_stopwords(st.text("stopwords")) : default_stopwords();
  cfg.vocab_size = st.count("vocab_size", cfg.vocab_size);
  cfg.coverage_quantile = st.real("coverage_quantile", cfg.coverage_quantile);
  cfg.ratios = st.ratios();
  cfg.seed = static_cast<std::uint64_t>(st.integer("seed", static_cast<long long>(cfg.seed)));
  if (cfg.vocab_size == 0) throw UsageError("--vocab-size must be positive");
  if (!(cfg.coverage_quantile > 0.0 && cfg.coverage_quantile <= 1.0)) {
    throw UsageError("--coverage-quantile must be in (0, 1]");
  }

  std::ifstream in(input);
  if (!in) throw DataError("cannot open " + input);
  IngestStats stats;
  Corpus corpus;
  try {
    corpus = ingest_reviews(in, cfg, &stats);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  save_corpus(corpus, dest);
  out << summary_json(corpus, &stats) << "\n";
  return kExitOk;
}

int cmd_train(const Settings& st, std::ostream& out) {
  const HyperParams hp = st.hyper_params();
  const std::string dest = st.output_path(st.required_text("out"));
  if (!hp.embeddings_path.empty()) require_file(hp.embeddings_path, "embedding file");
  require_writable_parent(dest);
  std::optional<std::ofstream> log_file;
  if (st.has("log")) {
    const std::string log_path = st.output_path(st.text("log"));
    require_writable_parent(log_path);
    log_file.emplace(log_path);
    if (!*log_file) throw DataError("cannot write " + log_path);
  }
  const Corpus corpus = load_checked_corpus(st);
  std::ostream& log = log_file ? static_cast<std::ostream&>(*log_file) : out;
  const EpochCallback on_epoch = [&](const EpochRecord& r) { log << to_ndjson(r) << "\n" << std::flush; };

  double lambda = hp.lambda;
  std::optional<TrainResult> result;
  nlohmann::ordered_json search = nlohmann::ordered_json::array();
  if (st.has("lambda_grid")) {
    LambdaSearchResult found = select_lambda(corpus, hp, st.list<double>("lambda_grid", {}), on_epoch);
    for (const auto& [l, mae] : found.val_mae) search.push_back({{"lambda", l}, {"val_mae", mae}});
    lambda = found.best_lambda;
    result = std::move(found.best);
  } else {
    result = train(corpus, hp, on_epoch);
  }
  if (result->diverged) throw NumericalError(result->diagnostic);

  nlohmann::ordered_json meta;
  meta["lambda"] = lambda;
  meta["seed"] = hp.seed;
  meta["best_epoch"] = result->best_epoch;
  meta["best_val_mae"] = result->best_val_mae;
  meta["epochs_run"] = result->log.size();
  save_checkpoint(result->model, dest, meta.dump());

  nlohmann::ordered_json summary = meta;
  summary["checkpoint"] = dest;
  if (!search.empty()) summary["lambda_search"] = search;
  out << summary.dump() << "\n";
  return kExitOk;
}

int cmd_evaluate(const Settings& st, bool baseline, std::ostream& out) {
  const Corpus corpus = load_checked_corpus(st);
  const Split split = parse_split(st.text("split", "test"));
  const std::size_t threads = st.count("threads", 0);
  if (st.has("checkpoint") || !baseline) {
    const HtiModel model = load_checked_model(st, corpus);
    out << to_json(evaluate(model, corpus, split, threads)) << "\n";
  }
  if (baseline) {
    MetricsReport bias = evaluate_bias_model(fit_bias_model(corpus), corpus, split);
    out << to_json(bias) << "\n";
    MetricsReport mean = evaluate_bias_model(fit_global_mean(corpus), corpus, split);
    mean.label = "global_mean";
    out << to_json(mean) << "\n";
  }
  return kExitOk;
}

int cmd_ablate(const Settings& st, std::ostream& out) {
  const HyperParams hp = st.hyper_params();
  const Corpus corpus = load_checked_corpus(st);
  RepeatedRunConfig runs;
  runs.ratios = st.ratios();
  runs.seeds.clear();
  for (const long long s : st.list<long long>("seeds", {1, 2, 3})) runs.seeds.push_back(static_cast<std::uint64_t>(s));

  if (st.has("train_ratios")) {
    for (const auto& row : run_ratio_sweep(corpus, hp, st.list<double>("train_ratios", {}), runs)) {
      out << to_json(row.report) << "\n" << std::flush;
    }
    return kExitOk;
  }
  const std::vector<std::string> names =
      st.list<std::string>("variants", {"full", "wavg", "wmax", "davg", "dmax"});
  std::vector<Variant> variants;
  for (const auto& n : names) variants.push_back(parse_variant(n));
  for (const Variant v : variants) out << to_json(run_ablation(v, corpus, hp, runs)) << "\n" << std::flush;
  return kExitOk;
}

int cmd_explain(const Settings& st, const std::vector<std::string>& pair, std::ostream& out) {
  std::string user_id;
  std::string item_id;
  for (const auto& p : pair) {
    if (p.rfind("u:", 0) == 0) {
      user_id = p.substr(2);
    } else if (p.rfind("i:", 0) == 0) {
      item_id = p.substr(2);
    } else {
      throw UsageError("--pair expects u:USER_ID i:ITEM_ID");
    }
  }
  if (user_id.empty() || item_id.empty()) throw UsageError("--pair expects u:USER_ID i:ITEM_ID");
  const std::size_t top = st.count("top", 4);
  const Corpus corpus = load_checked_corpus(st);
  const HtiModel model = load_checked_model(st, corpus);
  const std::string json = to_json(export_attention_trace(model, corpus, user_id, item_id, top));
  if (st.has("out")) {
    write_text(st.output_path(st.text("out")), json + "\n");
  } else {
    out << json << "\n";
  }
  return kExitOk;
}

int cmd_bench(const Settings& st, std::ostream& out) {
  auto sizes = [&](const std::string& key, std::vector<long long> fallback) {
    std::vector<std::size_t> v;
    for (const long long x : st.list<long long>(key, fallback)) {
      if (x <= 0) throw UsageError(flag_name(key) + " values must be positive");
      v.push_back(static_cast<std::size_t>(x));
    }
    return v;
  };
  const auto ms = sizes("bench_m", {5, 10, 20});
  const auto ns = sizes("bench_n", {5, 10, 20});
  const auto ks = sizes("bench_k", {32});
  const auto rows = benchmark_complexity(ms, ns, ks, st.count("bench_repeats", 200), st.count("bench_trials", 5),
                                         static_cast<std::uint64_t>(st.integer("seed", 7)));
  const std::string csv = benchmark_csv(rows);
  if (!st.has("out")) {
    out << csv;
    return kExitOk;
  }
  write_text(st.output_path(st.text("out")), csv);
  for (const std::size_t k : ks) {
    std::vector<BenchmarkRow> at_k;
    for (const auto& r : rows) {
      if (r.k == k) at_k.push_back(r);
    }
    if (at_k.size() < 3) continue;
    const ScalingFit fit = fit_mn_scaling(at_k);
    nlohmann::ordered_json j;
    j["k"] = k;
    j["intercept"] = fit.intercept;
    j["coef_mn"] = fit.coef_mn;
    j["coef_sum"] = fit.coef_sum;
    j["max_rel_deviation"] = fit.max_rel_deviation;
    j["monotone"] = fit.monotone;
    out << j.dump() << "\n";
  }
  return kExitOk;
}

struct Subcommand {
  const char* name;
  const char* description;
  std::vector<const char*> keys;
};

const std::vector<Subcommand>& subcommands() {
  static const std::vector<Subcommand> list = {
      {"ingest", "Preprocess raw reviews into a corpus file",
       {"input", "stopwords", "vocab_size", "coverage_quantile", "train_ratio", "val_ratio", "test_ratio", "seed",
        "output_dir"}},
      {"train", "Train a model and write a checkpoint",
       {"corpus", "embeddings", "log", "batch_size", "learning_rate", "lambda", "lambda_grid", "dropout",
        "embed_dim", "conv1_maps", "latent_dim", "max_epochs", "patience", "grad_clip", "seed", "threads",
        "variant", "init_output_bias", "output_dir"}},
      {"evaluate", "Report MAE and RMSE of a checkpoint on a split", {"corpus", "checkpoint", "split", "threads"}},
      {"ablate", "Compare model variants or training ratios over repeated runs",
       {"corpus", "variants", "seeds", "train_ratios", "train_ratio", "val_ratio", "test_ratio", "batch_size",
        "learning_rate", "lambda", "dropout", "embed_dim", "conv1_maps", "latent_dim", "max_epochs", "patience",
        "grad_clip", "threads", "init_output_bias", "embeddings"}},
      {"explain", "Export word and review attention for one user-item pair",
       {"corpus", "checkpoint", "top", "output_dir"}},
      {"bench", "Time the review interaction module over review counts",
       {"bench_m", "bench_n", "bench_k", "bench_repeats", "bench_trials", "seed", "output_dir"}},
  };
  return list;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Review-based rating prediction with hierarchical attention", "hti"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path;
  app.add_option("--config", config_path, "flat JSON config; flags override its values");

  std::map<std::string, std::map<std::string, std::string>> flag_values;
  std::map<std::string, std::string> out_paths;
  std::vector<std::string> pair;
  bool baseline = false;
  std::map<std::string, CLI::App*> subs;
  for (const auto& sc : subcommands()) {
    CLI::App* sub = app.add_subcommand(sc.name, sc.description);
    subs[sc.name] = sub;
    auto& values = flag_values[sc.name];
    for (const char* key : sc.keys) {
      const KeySpec* spec = find_spec(key);
      sub->add_option(flag_name(key), values[key], spec->help)->type_name(type_label(spec->kind));
    }
    const std::string name = sc.name;
    if (name != "evaluate") {
      auto* opt = sub->add_option("--out", out_paths[name], "output file");
      if (name == "ingest" || name == "train") opt->required();
    }
    if (name == "explain") sub->add_option("--pair", pair, "u:USER_ID i:ITEM_ID")->expected(2)->required();
    if (name == "evaluate") sub->add_flag("--baseline", baseline, "also report the bias and global-mean baselines");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    const CLI::App* active = nullptr;
    for (const auto* s : app.get_subcommands()) active = s;
    err << "hti: error: " << e.what() << "\n" << (active ? active->help() : app.help());
    return kExitUsage;
  }

  CLI::App* chosen = app.get_subcommands().front();
  const std::string name = chosen->get_name();
  try {
    Json cfg = Json::object();
    if (!config_path.empty()) cfg = load_config_file(config_path);
    for (const auto& [key, text] : flag_values[name]) {
      if (chosen->count(flag_name(key)) > 0) cfg[key] = flag_to_json(*find_spec(key), text);
    }
    if (!out_paths[name].empty()) cfg["out"] = out_paths[name];
    const Settings st(cfg);

    if (name == "ingest") return cmd_ingest(st, out);
    if (name == "train") return cmd_train(st, out);
    if (name == "evaluate") return cmd_evaluate(st, baseline, out);
    if (name == "ablate") return cmd_ablate(st, out);
    if (name == "explain") return cmd_explain(st, pair, out);
    return cmd_bench(st, out);
  } catch (const UsageError& e) {
    err << "hti: error: " << e.what() << "\n" << chosen->help();
    return kExitUsage;
  } catch (const NumericalError& e) {
    err << "hti: numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DataError& e) {
    err << "hti: data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    err << "hti: error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "hti: data error: " << e.what() << "\n";
    return kExitData;
  }
}

}  // namespace hti
