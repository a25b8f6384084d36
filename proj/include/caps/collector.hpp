#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "caps/records.hpp"

namespace caps::collect {

// Per-feature explorer state: value estimates updated by incremental means of
// observed episode scores, selection counts, and an annealed epsilon.
struct AgentBank {
  std::vector<double> q;       // value estimate per feature, init 0
  std::vector<long> counts;    // selections per feature

  explicit AgentBank(int features)
      : q(static_cast<std::size_t>(features), 0.0), counts(static_cast<std::size_t>(features), 0) {}

  static double epsilon(int episode) {
    const double e = 0.5 * std::pow(0.995, static_cast<double>(episode));
    return e < 0.05 ? 0.05 : e;
  }
};

struct CollectorOptions {
  int epochs = 300;
  std::uint64_t seed = 0;
};

// Explores the feature space one episode at a time: feature j joins the
// episode subset with probability eps(t)*0.5 + (1-eps(t))*sigmoid(q[j]);
// empty draws are retried up to 10 times, then the best-q feature is forced.
// Each episode's subset is evaluated once and every selected feature's q
// moves toward the observed score by incremental mean. The all-features
// subset is always recorded once as origin=seeded-baseline (episode 0).
std::vector<SelectionRecord> collect_records(
    int feature_count, const std::function<double(const FeatureSubset&)>& evaluate,
    const CollectorOptions& options);

}  // namespace caps::collect
