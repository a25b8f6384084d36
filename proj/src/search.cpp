#include "caps/search.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "caps/dataset.hpp"

namespace caps::policy {

namespace {

RowVector state_features(const FeatureSubset& subset, const Matrix& embedding, int feature_count) {
  const RowVector one_hot = data::one_hot_rep(subset, feature_count);
  RowVector features(feature_count + embedding.cols());
  features.head(feature_count) = one_hot;
  features.tail(embedding.cols()) = embedding.colwise().mean();
  return features;
}

}  // namespace

SearchState make_state(const FeatureSubset& subset, const codec::CodecParams& codec_params,
                       forest::SubsetEvaluator& evaluator) {
  SearchState s;
  s.subset = subset;
  s.embedding = codec::encode(subset.ids(), codec_params).rows;
  s.v = evaluator.evaluate(subset);
  s.features = state_features(subset, s.embedding, codec_params.config.feature_count);
  return s;
}

StepOutcome step_environment(const SearchState& state, const RowVector& delta,
                             const codec::CodecParams& codec_params,
                             forest::SubsetEvaluator& evaluator, const SearchConfig& config) {
  const int feature_count = codec_params.config.feature_count;
  const Matrix shifted = apply_action(state.embedding, delta, config.action_scale);

  StepOutcome out;
  try {
    const Matrix logits = codec::decode_logits(shifted, codec_params);
    out.candidate = codec::logits_to_subset(logits, codec_params.config.pad_id());
    out.candidate_v = evaluator.evaluate(out.candidate);
    out.reward = compute_reward(out.candidate_v, state.v, out.candidate.size(), feature_count,
                                config.lambda);
  } catch (const EmptyDecodeError&) {
    out.empty_decode = true;
    out.candidate = state.subset;
    out.candidate_v = state.v;
    out.reward = -config.lambda;
  }
  out.next = make_state(out.candidate, codec_params, evaluator);
  return out;
}

namespace {

struct SeedRun {
  std::vector<SearchLogEntry> log;
  std::vector<PpoDiagnostics> diagnostics;
  bool any_decode = false;
};

SeedRun run_seed(int seed_index, const FeatureSubset& seed_subset,
                 const codec::CodecParams& codec_params, forest::SubsetEvaluator& evaluator,
                 const SearchConfig& config, std::uint64_t search_seed) {
  SeedRun run;
  const int d = codec_params.config.d;
  const int feature_count = codec_params.config.feature_count;
  const std::string tag = std::to_string(seed_index);
  SeededRng rng(derive_seed(search_seed, "rollout-" + tag));
  PolicyParams policy = init_policy(feature_count + d, d, config.init_log_std,
                                    derive_seed(search_seed, "policy-" + tag));
  PpoState ppo_state;

  const SearchState start = make_state(seed_subset, codec_params, evaluator);
  double latest_clip = 0.0;
  run.log.push_back({seed_index, 0, start.subset, start.v, 0.0, latest_clip});

  Trajectory buffer;
  int steps = 0;
  while (steps < config.steps_per_seed) {
    SearchState state = start;
    Trajectory episode;
    for (int t = 0; t < config.horizon; ++t) {
      const ActionSample action = sample_action(policy, state.features, rng);
      const StepOutcome outcome =
          step_environment(state, action.delta, codec_params, evaluator, config);
      episode.states.push_back(state.features);
      episode.actions.push_back(action.delta);
      episode.log_probs.push_back(action.log_prob);
      episode.rewards.push_back(outcome.reward);
      episode.values.push_back(critic_value(policy, state.features));
      ++steps;
      if (!outcome.empty_decode) run.any_decode = true;
      run.log.push_back(
          {seed_index, steps, outcome.candidate, outcome.candidate_v, outcome.reward, latest_clip});
      state = outcome.next;
    }
    episode.returns = discounted_returns(episode.rewards, config.gamma);
    episode.advantages.resize(episode.returns.size());
    for (std::size_t i = 0; i < episode.returns.size(); ++i) {
      episode.advantages[i] = episode.returns[i] - episode.values[i];
    }
    buffer.append(episode);

    if (buffer.size() >= static_cast<std::size_t>(config.ppo_batch)) {
      auto diags = ppo_update(buffer, policy, ppo_state, config, rng);
      if (!diags.empty()) latest_clip = diags.back().clip_fraction;
      run.diagnostics.insert(run.diagnostics.end(), diags.begin(), diags.end());
      buffer.clear();
    }
  }

  if (config.steps_per_seed > 0) {
    // Deterministic extraction: one mean action from the seed state.
    const ActionSample mean_action = deterministic_action(policy, start.features);
    const StepOutcome outcome =
        step_environment(start, mean_action.delta, codec_params, evaluator, config);
    if (!outcome.empty_decode) run.any_decode = true;
    run.log.push_back({seed_index, steps + 1, outcome.candidate, outcome.candidate_v,
                       outcome.reward, latest_clip});
  }
  return run;
}

}  // namespace

SearchResult search(const std::vector<FeatureSubset>& seeds,
                    const codec::CodecParams& codec_params, forest::SubsetEvaluator& evaluator,
                    const SearchConfig& config, std::uint64_t seed, const SearchOptions& options) {
  config.validate();
  if (seeds.empty()) throw ContractError("search: no seeds");
  if (codec_params.config.feature_count != evaluator.dataset().feature_count()) {
    throw DimensionError("search: codec trained for " +
                         std::to_string(codec_params.config.feature_count) +
                         " features but the dataset has " +
                         std::to_string(evaluator.dataset().feature_count()));
  }

  std::vector<SeedRun> runs(seeds.size());
  parallel_chunks(seeds.size(), options.threads, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      runs[i] = run_seed(static_cast<int>(i), seeds[i], codec_params, evaluator, config, seed);
    }
  });

  SearchResult result;
  bool any_decode = false;
  for (SeedRun& run : runs) {
    result.log.insert(result.log.end(), run.log.begin(), run.log.end());
    result.diagnostics.insert(result.diagnostics.end(), run.diagnostics.begin(),
                              run.diagnostics.end());
    any_decode = any_decode || run.any_decode;
  }
  result.decode_fallback = !any_decode && config.steps_per_seed > 0;

  const SearchLogEntry* best = &result.log.front();
  for (const SearchLogEntry& e : result.log) {
    if (e.v > best->v || (e.v == best->v && subset_tie_less(e.subset, best->subset))) {
      best = &e;
    }
  }
  result.best_subset = best->subset;
  result.best_v = best->v;
  return result;
}

void save_search_log(const std::string& path, const std::vector<SearchLogEntry>& log) {
  std::ofstream f(path);
  if (!f) throw IoError("save_search_log: cannot write '" + path + "'");
  f << kSearchLogHeader << '\n';
  for (const SearchLogEntry& e : log) {
    nlohmann::json line{{"seed_index", e.seed_index}, {"step", e.step},
                        {"subset", e.subset.ids()},  {"v", e.v},
                        {"reward", e.reward},        {"clip_fraction", e.clip_fraction}};
    f << line.dump() << '\n';
  }
  if (!f) throw IoError("save_search_log: write to '" + path + "' failed");
}

std::vector<SearchLogEntry> load_search_log(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("load_search_log: cannot open '" + path + "'");
  std::vector<SearchLogEntry> out;
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    try {
      const nlohmann::json j = nlohmann::json::parse(line);
      SearchLogEntry e;
      e.seed_index = j.at("seed_index").get<int>();
      e.step = j.at("step").get<int>();
      e.subset = FeatureSubset(j.at("subset").get<std::vector<int>>());
      e.v = j.at("v").get<double>();
      e.reward = j.at("reward").get<double>();
      e.clip_fraction = j.at("clip_fraction").get<double>();
      out.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw IoError("load_search_log: line " + std::to_string(line_no) + " of '" + path +
                    "' is malformed: " + ex.what());
    }
  }
  return out;
}

}  // namespace caps::policy
