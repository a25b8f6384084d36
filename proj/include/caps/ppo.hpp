#pragma once

#include <span>
#include <vector>

#include "caps/adam.hpp"
#include "caps/policy.hpp"

namespace caps::policy {

// Rollout buffer. Per step: state features, action, log pi(a|s), reward R_t,
// return G_t, advantage A_t = G_t - V(s_t), and the critic estimate V(s_t).
struct Trajectory {
  std::vector<RowVector> states;
  std::vector<RowVector> actions;
  std::vector<double> log_probs;
  std::vector<double> rewards;
  std::vector<double> returns;
  std::vector<double> advantages;
  std::vector<double> values;

  std::size_t size() const { return states.size(); }
  void clear();
  void append(const Trajectory& other);
};

// Backward recurrence G_t = R_t + gamma * G_{t+1}; the final step's return
// equals its reward.
std::vector<double> discounted_returns(std::span<const double> rewards, double gamma);

// (1/T) * sum (V(s_t) - G_t)^2.
double critic_loss_value(std::span<const double> values, std::span<const double> returns);

// Zero-mean unit-variance normalization; degenerate batches (std ~ 0) map to
// all zeros.
std::vector<double> normalize_advantages(std::span<const double> advantages);

// Clipped-surrogate actor loss (to minimize):
//   -mean_t min(r_t * A_t, clip(r_t, 1-eps, 1+eps) * A_t),
// with r_t = exp(new_lp - old_lp) and advantages normalized internally.
double actor_loss_value(std::span<const double> new_log_probs,
                        std::span<const double> old_log_probs,
                        std::span<const double> advantages, double clip_eps);

// Tape version: new_log_probs is a [B x 1] node, the rest are constants.
// `advantages` must already be normalized.
diff::Var actor_loss_node(diff::Var new_log_probs, std::span<const double> old_log_probs,
                          std::span<const double> advantages, double clip_eps);

// Builds the [B x 1] log pi(a_t|s_t) column for a state batch on a tape.
diff::Var log_prob_node(diff::Var states, diff::Var actions_const, const MlpVars& actor,
                        diff::Var log_std);

struct PpoDiagnostics {
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;        // fraction of samples with r outside [1-eps, 1+eps]
  double max_surrogate_excess = 0.0; // max over samples of surr - r*A (must be <= 0)
};

struct PpoState {
  diff::AdamState actor_adam;
  diff::AdamState critic_adam;
};

// ppo_epochs passes over shuffled minibatches of exactly ppo_batch steps;
// each minibatch takes one Adam step on the actor loss (lr_actor) and one on
// the critic loss (lr_critic). Requires at least ppo_batch collected steps.
std::vector<PpoDiagnostics> ppo_update(const Trajectory& buffer, PolicyParams& params,
                                       PpoState& state, const SearchConfig& config,
                                       SeededRng& rng);

}  // namespace caps::policy
