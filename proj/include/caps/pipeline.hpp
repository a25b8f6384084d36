#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "caps/checkpoint.hpp"
#include "caps/collector.hpp"
#include "caps/evaluator.hpp"
#include "caps/search.hpp"

namespace caps::cli {

inline constexpr int kConfigFormatVersion = 1;
inline constexpr int kReportFormatVersion = 1;
inline constexpr const char* kEmbeddingsHeader = "# caps-embeddings v1";

// Output file names inside the run directory.
inline constexpr const char* kRecordsFile = "records.jsonl";
inline constexpr const char* kCheckpointFile = "codec.json";
inline constexpr const char* kSearchLogFile = "search_log.jsonl";
inline constexpr const char* kReportFile = "report.json";
inline constexpr const char* kEmbeddingsFile = "embeddings.csv";

struct DatasetConfig {
  std::string path;
  std::string label_column;
  std::optional<data::Task> task_override;
  int positive_class = 1;
};

struct EvalSettings {
  int folds = 5;
  int n_trees = 20;
  int max_features = 0;  // 0: ceil(sqrt(columns))
  int min_samples_leaf = 1;
  int max_depth = -1;
  int fit_threads = 1;
};

// Whole-run configuration. Defaults follow the reference operating point:
// collector 300 epochs, 25 permutation copies, top-25 seeds, codec d=128 /
// 4 heads / 32 inducing points / batch 64 / lr 1e-3, PPO eps=0.2 lambda=0.1
// batch 512 with 10 epochs and 1000 steps per seed. Every stage seed derives
// from the global seed as splitmix64(global ^ FNV1a(component)).
struct RunConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "caps_out";
  DatasetConfig dataset;
  int collector_epochs = 300;
  codec::CodecConfig codec;  // feature_count is filled from the dataset
  int augmentation_copies = 25;
  int seed_count = 25;
  EvalSettings evaluator;
  policy::SearchConfig search;
  int random_baseline_count = 50;
  int codec_threads = 0;   // 0: auto
  int search_threads = 0;  // 0: auto
};

// JSON round trip; `base_dir` anchors relative dataset paths.
RunConfig run_config_from_json(const nlohmann::json& j, const std::string& base_dir);
nlohmann::json run_config_to_json(const RunConfig& config);
RunConfig load_run_config(const std::string& path);

// Stage failure wrapper: names the stage and keeps the cause.
struct StageError : Error {
  StageError(const std::string& stage_name, const std::string& cause)
      : Error("stage " + stage_name + ": " + cause), stage(stage_name) {}
  std::string stage;
};

data::Dataset load_stage(const RunConfig& config);

forest::EvaluatorConfig make_evaluator_config(const RunConfig& config, const data::Dataset& ds);

// Individual stages (each persists its artifact into output_dir).
std::vector<collect::SelectionRecord> collect_stage(const RunConfig& config,
                                                    forest::SubsetEvaluator& evaluator);
codec::CodecParams train_stage(const RunConfig& config, const data::Dataset& ds,
                               const std::vector<collect::SelectionRecord>& records);
policy::SearchResult search_stage(const RunConfig& config,
                                  const std::vector<collect::SelectionRecord>& records,
                                  const codec::CodecParams& params,
                                  forest::SubsetEvaluator& evaluator);

// Full pipeline: collect -> augment+train -> top-k seeds -> search -> final
// 5-fold + 80/20 holdout evaluation -> report.json. Returns the report.
nlohmann::json run_pipeline(const RunConfig& config);

// Pooled-mean embedding export for up to `max_subsets` top records, one
// original ordering plus `copies` permutations each.
void export_embeddings(const RunConfig& config,
                       const std::vector<collect::SelectionRecord>& records,
                       const codec::CodecParams& params, int copies = 20, int max_subsets = 5);

// Detailed evaluation of one subset (CV + holdout), as a report fragment.
nlohmann::json eval_subset_report(const RunConfig& config, const FeatureSubset& subset);

}  // namespace caps::cli
