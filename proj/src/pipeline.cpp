#include "caps/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "caps/codec_train.hpp"
#include "caps/metrics.hpp"
#include "caps/rng.hpp"

namespace caps::cli {

using nlohmann::json;

namespace {

namespace fs = std::filesystem;

void require_keys(const json& j, const std::string& section,
                  std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError("config: '" + section + "' must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* k) { return it.key() == k; }) == allowed.end()) {
      throw ConfigError("config: unknown key '" + it.key() + "' in '" + section + "'");
    }
  }
}

template <typename T>
void read_into(const json& j, const char* key, T& target) {
  if (j.contains(key)) target = j.at(key).get<T>();
}

double stage_seconds(const std::chrono::steady_clock::time_point& from) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - from).count();
}

double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n == 0) throw ContractError("median: empty");
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::string out_path(const RunConfig& config, const char* file) {
  return (fs::path(config.output_dir) / file).string();
}

}  // namespace

RunConfig run_config_from_json(const json& j, const std::string& base_dir) {
  try {
    require_keys(j, "<root>",
                 {"format_version", "seed", "output_dir", "dataset", "collector", "codec",
                  "augmentation", "seeds", "evaluator", "search", "report"});
    if (j.contains("format_version") && j.at("format_version").get<int>() != kConfigFormatVersion) {
      throw ConfigError("config: unsupported format_version");
    }
    RunConfig c;
    read_into(j, "seed", c.seed);
    read_into(j, "output_dir", c.output_dir);

    if (!j.contains("dataset")) throw ConfigError("config: missing 'dataset' section");
    {
      const json& d = j.at("dataset");
      require_keys(d, "dataset", {"path", "label_column", "task", "positive_class"});
      if (!d.contains("path") || !d.contains("label_column")) {
        throw ConfigError("config: dataset needs 'path' and 'label_column'");
      }
      c.dataset.path = d.at("path").get<std::string>();
      c.dataset.label_column = d.at("label_column").get<std::string>();
      if (d.contains("task")) {
        c.dataset.task_override = data::task_from_name(d.at("task").get<std::string>());
      }
      read_into(d, "positive_class", c.dataset.positive_class);
      fs::path p(c.dataset.path);
      if (p.is_relative() && !base_dir.empty()) c.dataset.path = (fs::path(base_dir) / p).string();
    }

    if (j.contains("collector")) {
      const json& s = j.at("collector");
      require_keys(s, "collector", {"epochs"});
      read_into(s, "epochs", c.collector_epochs);
    }
    if (j.contains("codec")) {
      const json& s = j.at("codec");
      require_keys(s, "codec",
                   {"d", "heads", "inducing", "max_len", "rff_hidden", "lr", "batch_size",
                    "epochs", "threads"});
      read_into(s, "d", c.codec.d);
      read_into(s, "heads", c.codec.heads);
      read_into(s, "inducing", c.codec.inducing);
      read_into(s, "max_len", c.codec.max_len);
      read_into(s, "rff_hidden", c.codec.rff_hidden);
      read_into(s, "lr", c.codec.lr);
      read_into(s, "batch_size", c.codec.batch_size);
      read_into(s, "epochs", c.codec.epochs);
      read_into(s, "threads", c.codec_threads);
    }
    if (j.contains("augmentation")) {
      const json& s = j.at("augmentation");
      require_keys(s, "augmentation", {"copies"});
      read_into(s, "copies", c.augmentation_copies);
    }
    if (j.contains("seeds")) {
      const json& s = j.at("seeds");
      require_keys(s, "seeds", {"k"});
      read_into(s, "k", c.seed_count);
    }
    if (j.contains("evaluator")) {
      const json& s = j.at("evaluator");
      require_keys(s, "evaluator",
                   {"folds", "n_trees", "max_features", "min_samples_leaf", "max_depth",
                    "fit_threads"});
      read_into(s, "folds", c.evaluator.folds);
      read_into(s, "n_trees", c.evaluator.n_trees);
      read_into(s, "max_features", c.evaluator.max_features);
      read_into(s, "min_samples_leaf", c.evaluator.min_samples_leaf);
      read_into(s, "max_depth", c.evaluator.max_depth);
      read_into(s, "fit_threads", c.evaluator.fit_threads);
    }
    if (j.contains("search")) {
      const json& s = j.at("search");
      require_keys(s, "search",
                   {"lambda", "gamma", "clip_eps", "lr_actor", "lr_critic", "steps_per_seed",
                    "ppo_batch", "ppo_epochs", "horizon", "action_scale", "init_log_std",
                    "threads"});
      read_into(s, "lambda", c.search.lambda);
      read_into(s, "gamma", c.search.gamma);
      read_into(s, "clip_eps", c.search.clip_eps);
      read_into(s, "lr_actor", c.search.lr_actor);
      read_into(s, "lr_critic", c.search.lr_critic);
      read_into(s, "steps_per_seed", c.search.steps_per_seed);
      read_into(s, "ppo_batch", c.search.ppo_batch);
      read_into(s, "ppo_epochs", c.search.ppo_epochs);
      read_into(s, "horizon", c.search.horizon);
      read_into(s, "action_scale", c.search.action_scale);
      read_into(s, "init_log_std", c.search.init_log_std);
      read_into(s, "threads", c.search_threads);
    }
    if (j.contains("report")) {
      const json& s = j.at("report");
      require_keys(s, "report", {"random_baseline_count"});
      read_into(s, "random_baseline_count", c.random_baseline_count);
    }

    if (c.collector_epochs < 1) throw ConfigError("config: collector.epochs must be >= 1");
    if (c.augmentation_copies < 1) throw ConfigError("config: augmentation.copies must be >= 1");
    if (c.seed_count < 1) throw ConfigError("config: seeds.k must be >= 1");
    if (c.random_baseline_count < 1) {
      throw ConfigError("config: report.random_baseline_count must be >= 1");
    }
    c.search.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: malformed JSON value: ") + e.what());
  }
}

json run_config_to_json(const RunConfig& c) {
  json j;
  j["format_version"] = kConfigFormatVersion;
  j["seed"] = c.seed;
  j["output_dir"] = c.output_dir;
  j["dataset"] =
      json{{"path", c.dataset.path}, {"label_column", c.dataset.label_column},
           {"positive_class", c.dataset.positive_class}};
  if (c.dataset.task_override) j["dataset"]["task"] = data::task_name(*c.dataset.task_override);
  j["collector"] = json{{"epochs", c.collector_epochs}};
  j["codec"] = json{{"d", c.codec.d},
                    {"heads", c.codec.heads},
                    {"inducing", c.codec.inducing},
                    {"max_len", c.codec.max_len},
                    {"rff_hidden", c.codec.rff_hidden},
                    {"lr", c.codec.lr},
                    {"batch_size", c.codec.batch_size},
                    {"epochs", c.codec.epochs},
                    {"threads", c.codec_threads}};
  j["augmentation"] = json{{"copies", c.augmentation_copies}};
  j["seeds"] = json{{"k", c.seed_count}};
  j["evaluator"] = json{{"folds", c.evaluator.folds},
                        {"n_trees", c.evaluator.n_trees},
                        {"max_features", c.evaluator.max_features},
                        {"min_samples_leaf", c.evaluator.min_samples_leaf},
                        {"max_depth", c.evaluator.max_depth},
                        {"fit_threads", c.evaluator.fit_threads}};
  j["search"] = json{{"lambda", c.search.lambda},
                     {"gamma", c.search.gamma},
                     {"clip_eps", c.search.clip_eps},
                     {"lr_actor", c.search.lr_actor},
                     {"lr_critic", c.search.lr_critic},
                     {"steps_per_seed", c.search.steps_per_seed},
                     {"ppo_batch", c.search.ppo_batch},
                     {"ppo_epochs", c.search.ppo_epochs},
                     {"horizon", c.search.horizon},
                     {"action_scale", c.search.action_scale},
                     {"init_log_std", c.search.init_log_std},
                     {"threads", c.search_threads}};
  j["report"] = json{{"random_baseline_count", c.random_baseline_count}};
  return j;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("config: cannot open '" + path + "'");
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config: '" + path + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j, fs::path(path).parent_path().string());
}

data::Dataset load_stage(const RunConfig& config) {
  try {
    return data::load_csv(config.dataset.path, config.dataset.label_column,
                          config.dataset.task_override);
  } catch (const Error& e) {
    throw StageError("load", e.what());
  }
}

forest::EvaluatorConfig make_evaluator_config(const RunConfig& config, const data::Dataset& ds) {
  forest::EvaluatorConfig e;
  e.folds = config.evaluator.folds;
  e.fold_seed = derive_seed(config.seed, "folds");
  e.forest_seed = derive_seed(config.seed, "forest");
  e.forest.n_trees = config.evaluator.n_trees;
  e.forest.max_features = config.evaluator.max_features;
  e.forest.min_samples_leaf = config.evaluator.min_samples_leaf;
  e.forest.max_depth = config.evaluator.max_depth;
  e.positive_class = config.dataset.positive_class;
  e.fit_threads = config.evaluator.fit_threads;
  (void)ds;
  return e;
}

std::vector<collect::SelectionRecord> collect_stage(const RunConfig& config,
                                                    forest::SubsetEvaluator& evaluator) {
  try {
    collect::CollectorOptions opts;
    opts.epochs = config.collector_epochs;
    opts.seed = derive_seed(config.seed, "collector");
    auto records = collect::collect_records(
        evaluator.dataset().feature_count(),
        [&evaluator](const FeatureSubset& f) { return evaluator.evaluate(f); }, opts);
    fs::create_directories(config.output_dir);
    collect::save_records(out_path(config, kRecordsFile), records);
    return records;
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError("collect", e.what());
  }
}

codec::CodecParams train_stage(const RunConfig& config, const data::Dataset& ds,
                               const std::vector<collect::SelectionRecord>& records) {
  codec::CodecConfig ccfg = config.codec;
  ccfg.feature_count = ds.feature_count();
  std::vector<codec::CodecSample> corpus;
  try {
    ccfg.validate();
    auto augmented = collect::augment_records(records, config.augmentation_copies,
                                              ccfg.resolved_max_len(), ccfg.pad_id(),
                                              derive_seed(config.seed, "augment"));
    if (augmented.dropped_oversize > 0) {
      std::fprintf(stderr, "[caps] augment: dropped %d oversize record(s)\n",
                   augmented.dropped_oversize);
    }
    corpus = std::move(augmented.corpus);
  } catch (const Error& e) {
    throw StageError("augment", e.what());
  }
  try {
    codec::TrainOptions topts;
    topts.threads = config.codec_threads;
    codec::TrainResult trained =
        codec::train_codec(corpus, ccfg, derive_seed(config.seed, "codec"), topts);
    for (const std::string& w : trained.warnings) {
      std::fprintf(stderr, "[caps] train: %s\n", w.c_str());
    }
    fs::create_directories(config.output_dir);
    codec::save_checkpoint(out_path(config, kCheckpointFile), trained.params);
    return std::move(trained.params);
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError("train", e.what());
  }
}

policy::SearchResult search_stage(const RunConfig& config,
                                  const std::vector<collect::SelectionRecord>& records,
                                  const codec::CodecParams& params,
                                  forest::SubsetEvaluator& evaluator) {
  try {
    auto seeds = collect::top_k_seeds(records, config.seed_count);
    policy::SearchOptions opts;
    opts.threads = config.search_threads;
    policy::SearchResult result = policy::search(seeds, params, evaluator, config.search,
                                                 derive_seed(config.seed, "search"), opts);
    if (result.decode_fallback) {
      std::fprintf(stderr, "[caps] search: every step decoded to PAD; returning the best seed\n");
    }
    fs::create_directories(config.output_dir);
    policy::save_search_log(out_path(config, kSearchLogFile), result.log);
    return result;
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError("search", e.what());
  }
}

namespace {

json final_eval_json(const RunConfig& config, const data::Dataset& ds,
                     forest::SubsetEvaluator& evaluator, const FeatureSubset& subset) {
  forest::FoldScores scores = evaluator.evaluate_detailed(subset);
  forest::ForestConfig fc = evaluator.config().forest;
  fc.seed = derive_seed(config.seed, "holdout-forest");
  const double holdout = forest::holdout_score(ds, subset, derive_seed(config.seed, "holdout"),
                                               fc, config.dataset.positive_class);
  json out;
  out["cv_per_fold"] = scores.per_fold;
  out["cv_mean_raw"] = scores.mean_raw;
  out["cv_v"] = scores.v;
  out["holdout"] = holdout;
  out["folds"] = evaluator.config().folds;
  return out;
}

}  // namespace

json run_pipeline(const RunConfig& config) {
  const auto t_start = std::chrono::steady_clock::now();
  json timings;

  data::Dataset ds = load_stage(config);
  forest::EvaluatorConfig ecfg = make_evaluator_config(config, ds);
  forest::SubsetEvaluator evaluator(ds, ecfg);

  auto t0 = std::chrono::steady_clock::now();
  auto records = collect_stage(config, evaluator);
  timings["collect_s"] = stage_seconds(t0);

  t0 = std::chrono::steady_clock::now();
  codec::CodecParams params = train_stage(config, ds, records);
  timings["train_s"] = stage_seconds(t0);

  t0 = std::chrono::steady_clock::now();
  policy::SearchResult result = search_stage(config, records, params, evaluator);
  timings["search_s"] = stage_seconds(t0);

  t0 = std::chrono::steady_clock::now();
  json report;
  try {
    const FeatureSubset& best = result.best_subset;

    report["format_version"] = kReportFormatVersion;
    report["file_format_versions"] =
        json{{"records", 1}, {"checkpoint", codec::kCheckpointFormatVersion}, {"search_log", 1},
             {"report", kReportFormatVersion}, {"config", kConfigFormatVersion}};
    report["config_echo"] = run_config_to_json(config);
    report["seed"] = config.seed;
    report["dataset"] = json{{"path", config.dataset.path},
                             {"rows", ds.n()},
                             {"features", ds.feature_count()},
                             {"task", data::task_name(ds.task)},
                             {"dropped_rows", ds.dropped_rows}};

    std::vector<std::string> names;
    for (int id : best.ids()) names.push_back(ds.feature_names[static_cast<std::size_t>(id)]);
    report["best_subset"] = json{{"indices", best.ids()}, {"names", names}};
    report["best_v"] = result.best_v;
    report["subset_size_ratio"] =
        static_cast<double>(best.size()) / static_cast<double>(ds.feature_count());

    // Baselines: the whole feature set and size-matched random subsets.
    const double all_features_v = evaluator.evaluate(FeatureSubset::full(ds.feature_count()));
    SeededRng baseline_rng(derive_seed(config.seed, "baseline"));
    std::vector<double> random_vs;
    for (int i = 0; i < config.random_baseline_count; ++i) {
      std::vector<int> all_ids(static_cast<std::size_t>(ds.feature_count()));
      for (int k = 0; k < ds.feature_count(); ++k) all_ids[static_cast<std::size_t>(k)] = k;
      baseline_rng.shuffle(all_ids);
      all_ids.resize(static_cast<std::size_t>(best.size()));
      random_vs.push_back(evaluator.evaluate(FeatureSubset(all_ids)));
    }
    report["baselines"] = json{
        {"all_features_v", all_features_v},
        {"random_subsets",
         json{{"count", config.random_baseline_count}, {"size", best.size()},
              {"median_v", median(random_vs)}}}};

    report["final_eval"] = final_eval_json(config, ds, evaluator, best);

    double last_clip = 0.0;
    for (const auto& d : result.diagnostics) last_clip = d.clip_fraction;
    std::set<int> seed_indices;
    for (const auto& e : result.log) seed_indices.insert(e.seed_index);
    report["search"] = json{{"seeds", seed_indices.size()},
                            {"log_entries", result.log.size()},
                            {"updates", result.diagnostics.size()},
                            {"last_clip_fraction", last_clip},
                            {"decode_fallback", result.decode_fallback}};
    report["collector"] = json{{"records", records.size()}};
    // Cache hit/miss totals depend on thread interleaving, so they go to
    // stderr rather than into the (reproducible) report.
    std::fprintf(stderr, "[caps] evaluator cache: %llu hits, %llu misses\n",
                 static_cast<unsigned long long>(evaluator.cache_hits()),
                 static_cast<unsigned long long>(evaluator.cache_misses()));
  } catch (const Error& e) {
    throw StageError("report", e.what());
  }
  timings["final_eval_s"] = stage_seconds(t0);
  timings["total_s"] = stage_seconds(t_start);
  report["timings"] = timings;

  try {
    fs::create_directories(config.output_dir);
    std::ofstream f(out_path(config, kReportFile));
    if (!f) throw IoError("cannot write report");
    f << report.dump(2) << '\n';
  } catch (const Error& e) {
    throw StageError("report", e.what());
  }
  return report;
}

void export_embeddings(const RunConfig& config,
                       const std::vector<collect::SelectionRecord>& records,
                       const codec::CodecParams& params, int copies, int max_subsets) {
  if (records.empty()) throw ContractError("export_embeddings: no records");
  std::vector<FeatureSubset> subsets = collect::top_k_seeds(records, max_subsets);
  // Keep only subsets the codec can encode.
  std::erase_if(subsets, [&](const FeatureSubset& f) {
    return f.size() > params.config.resolved_max_len();
  });
  if (subsets.empty()) throw ContractError("export_embeddings: no subset fits the codec");

  fs::create_directories(config.output_dir);
  const std::string path = out_path(config, kEmbeddingsFile);
  std::ofstream f(path);
  if (!f) throw IoError("export_embeddings: cannot write '" + path + "'");
  f << kEmbeddingsHeader << '\n';
  f << "subset_id,permutation_id";
  for (int i = 0; i < params.config.d; ++i) f << ",e_" << i;
  f << '\n';

  SeededRng rng(derive_seed(config.seed, "export"));
  char buf[32];
  for (std::size_t s = 0; s < subsets.size(); ++s) {
    for (int perm = 0; perm <= copies; ++perm) {
      std::vector<int> tokens = subsets[s].ids();
      if (perm > 0) rng.shuffle(tokens);  // permutation 0 is the canonical order
      const Matrix e = codec::encode(tokens, params).rows;
      const RowVector pooled = e.colwise().mean();
      f << s << ',' << perm;
      for (Eigen::Index i = 0; i < pooled.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", pooled(i));
        f << ',' << buf;
      }
      f << '\n';
    }
  }
  if (!f) throw IoError("export_embeddings: write to '" + path + "' failed");
}

json eval_subset_report(const RunConfig& config, const FeatureSubset& subset) {
  data::Dataset ds = load_stage(config);
  if (subset.empty()) throw ContractError("eval: empty subset");
  if (subset.max_id() >= ds.feature_count()) {
    throw IndexError("eval: feature id " + std::to_string(subset.max_id()) + " outside [0, " +
                     std::to_string(ds.feature_count()) + ")");
  }
  forest::SubsetEvaluator evaluator(ds, make_evaluator_config(config, ds));
  json out = final_eval_json(config, ds, evaluator, subset);
  out["subset"] = subset.ids();
  out["task"] = data::task_name(ds.task);
  return out;
}

}  // namespace caps::cli
