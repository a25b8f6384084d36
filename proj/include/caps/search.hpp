#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "caps/codec.hpp"
#include "caps/evaluator.hpp"
#include "caps/ppo.hpp"

namespace caps::policy {

// Search state: the one-hot subset vector concatenated with the column mean
// of the current embedding; the embedding is re-encoded from the subset at
// every step so states stay on the decoder-consistent manifold.
struct SearchState {
  FeatureSubset subset;
  Matrix embedding;  // encode(subset)
  double v = 0.0;
  RowVector features;  // [one_hot(D) | colmean(E)(d)]
};

SearchState make_state(const FeatureSubset& subset, const codec::CodecParams& codec_params,
                       forest::SubsetEvaluator& evaluator);

struct StepOutcome {
  SearchState next;
  double reward = 0.0;
  bool empty_decode = false;
  FeatureSubset candidate;  // decoded subset (pre-action subset on EmptyDecode)
  double candidate_v = 0.0;
};

// Applies delta to the embedding, decodes, evaluates and re-grounds. An
// all-PAD decode keeps the previous subset and pays a -lambda penalty.
StepOutcome step_environment(const SearchState& state, const RowVector& delta,
                             const codec::CodecParams& codec_params,
                             forest::SubsetEvaluator& evaluator, const SearchConfig& config);

struct SearchLogEntry {
  int seed_index = 0;
  int step = 0;  // 0: seed evaluation; >0: env steps; last entry per seed is
                 // the deterministic extraction pass
  FeatureSubset subset;
  double v = 0.0;
  double reward = 0.0;
  double clip_fraction = 0.0;  // latest update's value at the time of logging
};

struct SearchResult {
  FeatureSubset best_subset;
  double best_v = 0.0;
  std::vector<SearchLogEntry> log;
  std::vector<PpoDiagnostics> diagnostics;
  bool decode_fallback = false;  // no env step ever decoded a subset
};

struct SearchOptions {
  int threads = 0;  // parallelism across seeds; results are thread-count independent
};

// For each seed: PPO episodes of `horizon` steps until the step budget is
// spent, updating whenever ppo_batch fresh steps accumulate, then one
// deterministic (delta = mu) extraction pass. Every decoded candidate lands
// in the log; the best-v candidate wins (ties: smaller subset, then
// lexicographic ids). Seeds run independently with derived seeds and a fresh
// policy each, so the search is reproducible.
SearchResult search(const std::vector<FeatureSubset>& seeds,
                    const codec::CodecParams& codec_params, forest::SubsetEvaluator& evaluator,
                    const SearchConfig& config, std::uint64_t seed,
                    const SearchOptions& options = {});

inline constexpr const char* kSearchLogHeader = "# caps-search-log v1";

// JSONL: {"seed_index","step","subset","v","reward","clip_fraction"} per line
// under a '#' version header.
void save_search_log(const std::string& path, const std::vector<SearchLogEntry>& log);
std::vector<SearchLogEntry> load_search_log(const std::string& path);

}  // namespace caps::policy
