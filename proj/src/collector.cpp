#include "caps/collector.hpp"

#include <cmath>

#include "caps/rng.hpp"

namespace caps::collect {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

int best_q_feature(const AgentBank& bank) {
  int best = 0;
  for (std::size_t j = 1; j < bank.q.size(); ++j) {
    if (bank.q[j] > bank.q[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
  }
  return best;
}

}  // namespace

std::vector<SelectionRecord> collect_records(
    int feature_count, const std::function<double(const FeatureSubset&)>& evaluate,
    const CollectorOptions& options) {
  if (feature_count < 2) {
    throw ContractError("collect_records: need at least 2 features, got " +
                        std::to_string(feature_count));
  }
  if (options.epochs < 1) throw ContractError("collect_records: epochs must be >= 1");

  SeededRng rng(options.seed);
  AgentBank bank(feature_count);
  std::vector<SelectionRecord> records;
  records.reserve(static_cast<std::size_t>(options.epochs) + 1);

  // The full feature set anchors the corpus with its baseline score.
  const FeatureSubset all = FeatureSubset::full(feature_count);
  records.push_back({all, evaluate(all), 0, "seeded-baseline"});

  for (int episode = 1; episode <= options.epochs; ++episode) {
    const double eps = AgentBank::epsilon(episode - 1);
    std::vector<int> picked;
    for (int attempt = 0; attempt < 10 && picked.empty(); ++attempt) {
      for (int j = 0; j < feature_count; ++j) {
        const double p = eps * 0.5 + (1.0 - eps) * sigmoid(bank.q[static_cast<std::size_t>(j)]);
        if (rng.uniform() < p) picked.push_back(j);
      }
    }
    if (picked.empty()) picked.push_back(best_q_feature(bank));

    FeatureSubset subset(std::move(picked));
    const double v = evaluate(subset);
    for (int j : subset.ids()) {
      long& count = bank.counts[static_cast<std::size_t>(j)];
      count += 1;
      double& q = bank.q[static_cast<std::size_t>(j)];
      q += (v - q) / static_cast<double>(count);
    }
    records.push_back({std::move(subset), v, episode, "explored"});
  }
  return records;
}

}  // namespace caps::collect
