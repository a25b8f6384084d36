#pragma once

#include <cstdint>
#include <vector>

#include "caps/common.hpp"
#include "caps/ops.hpp"
#include "caps/rng.hpp"
#include "caps/tape.hpp"

namespace caps::policy {

struct SearchConfig {
  double lambda = 0.1;      // reward trade-off between score gain and brevity
  double gamma = 0.99;      // discount
  double clip_eps = 0.2;    // PPO clipping ratio
  double lr_actor = 3e-4;
  double lr_critic = 1e-3;
  int steps_per_seed = 1000;
  int ppo_batch = 512;
  int ppo_epochs = 10;
  int horizon = 50;
  double action_scale = 0.05;  // alpha applied to the broadcast perturbation
  double init_log_std = -1.0;

  void validate() const;
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr int kPolicyHidden = 128;

struct MlpWeights {
  Matrix w1, b1, w2, b2, w3, b3;  // in -> 128 -> 128 -> out, ReLU between
};

// Actor and critic share no parameters; the action distribution is a
// diagonal Gaussian with a state-independent log-std vector.
struct PolicyParams {
  MlpWeights actor;   // state features -> action mean in R^d
  Matrix log_std;     // 1 x d, clamped into [kLogStdMin, kLogStdMax] at use
  MlpWeights critic;  // state features -> scalar value
};

PolicyParams init_policy(int state_dim, int action_dim, double init_log_std, std::uint64_t seed);

std::vector<Matrix*> actor_param_list(PolicyParams& p);   // w1..b3, log_std
std::vector<Matrix*> critic_param_list(PolicyParams& p);  // w1..b3

struct MlpVars {
  diff::Var w1, b1, w2, b2, w3, b3;
};
MlpVars bind_mlp(diff::Tape& tape, const MlpWeights& w, bool requires_grad);
diff::Var mlp_forward(diff::Var states, const MlpVars& w);

// Forward evaluations (no gradients recorded).
RowVector actor_mean(const PolicyParams& p, const RowVector& state);
double critic_value(const PolicyParams& p, const RowVector& state);

RowVector clamped_log_std(const PolicyParams& p);

// Exact diagonal-Gaussian log density of `delta` under (mean, exp(log_std)).
double gaussian_log_prob(const RowVector& delta, const RowVector& mean,
                         const RowVector& log_std);

struct ActionSample {
  RowVector delta;
  double log_prob = 0.0;
};

// delta ~ N(mu(state), diag(exp(log_std))^2).
ActionSample sample_action(const PolicyParams& p, const RowVector& state, SeededRng& rng);

// Deterministic mode for the final extraction: delta = mu(state).
ActionSample deterministic_action(const PolicyParams& p, const RowVector& state);

// E+ = E + alpha * delta broadcast to every row; E is untouched.
Matrix apply_action(const Matrix& embedding, const RowVector& delta, double action_scale);

// R = lambda*(v_new - v_old) + (1-lambda)*(1 - len/D). The second term pays
// for shorter subsets; every reward lies in [-lambda, 1].
double compute_reward(double v_new, double v_old, int subset_len, int feature_count,
                      double lambda);

}  // namespace caps::policy
