#include "caps/policy.hpp"

#include <cmath>

namespace caps::policy {

using diff::Tape;
using diff::Var;

namespace {
constexpr double kLog2Pi = 1.8378770664093453;  // log(2*pi)
}

void SearchConfig::validate() const {
  if (lambda <= 0.0 || lambda >= 1.0) throw ConfigError("search: lambda must lie in (0, 1)");
  if (gamma < 0.0 || gamma > 1.0) throw ConfigError("search: gamma must lie in [0, 1]");
  if (clip_eps <= 0.0) throw ConfigError("search: clip_eps must be positive");
  if (lr_actor <= 0.0 || lr_critic <= 0.0) throw ConfigError("search: learning rates must be positive");
  if (steps_per_seed < 0) throw ConfigError("search: steps_per_seed must be >= 0");
  if (horizon < 1) throw ConfigError("search: horizon must be >= 1");
  if (steps_per_seed > 0 && horizon > steps_per_seed) {
    throw ConfigError("search: horizon cannot exceed steps_per_seed");
  }
  if (ppo_batch < 1 || ppo_epochs < 1) throw ConfigError("search: ppo_batch and ppo_epochs must be >= 1");
  if (action_scale < 0.0) throw ConfigError("search: action_scale must be >= 0");
}

namespace {

MlpWeights init_mlp(int in, int out, SeededRng& rng) {
  MlpWeights w;
  auto xavier = [&rng](Eigen::Index r, Eigen::Index c) {
    Matrix m(r, c);
    const double bound = std::sqrt(6.0 / static_cast<double>(r + c));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
    return m;
  };
  w.w1 = xavier(in, kPolicyHidden);
  w.b1 = Matrix::Zero(1, kPolicyHidden);
  w.w2 = xavier(kPolicyHidden, kPolicyHidden);
  w.b2 = Matrix::Zero(1, kPolicyHidden);
  w.w3 = xavier(kPolicyHidden, out);
  w.b3 = Matrix::Zero(1, out);
  return w;
}

}  // namespace

PolicyParams init_policy(int state_dim, int action_dim, double init_log_std, std::uint64_t seed) {
  if (state_dim < 1 || action_dim < 1) throw ContractError("init_policy: dimensions must be positive");
  SeededRng rng(seed);
  PolicyParams p;
  p.actor = init_mlp(state_dim, action_dim, rng);
  p.log_std = Matrix::Constant(1, action_dim, init_log_std);
  p.critic = init_mlp(state_dim, 1, rng);
  return p;
}

std::vector<Matrix*> actor_param_list(PolicyParams& p) {
  return {&p.actor.w1, &p.actor.b1, &p.actor.w2, &p.actor.b2, &p.actor.w3, &p.actor.b3, &p.log_std};
}

std::vector<Matrix*> critic_param_list(PolicyParams& p) {
  return {&p.critic.w1, &p.critic.b1, &p.critic.w2, &p.critic.b2, &p.critic.w3, &p.critic.b3};
}

MlpVars bind_mlp(Tape& tape, const MlpWeights& w, bool requires_grad) {
  MlpVars v;
  v.w1 = tape.make_leaf(w.w1, requires_grad);
  v.b1 = tape.make_leaf(w.b1, requires_grad);
  v.w2 = tape.make_leaf(w.w2, requires_grad);
  v.b2 = tape.make_leaf(w.b2, requires_grad);
  v.w3 = tape.make_leaf(w.w3, requires_grad);
  v.b3 = tape.make_leaf(w.b3, requires_grad);
  return v;
}

Var mlp_forward(Var states, const MlpVars& w) {
  Var h1 = diff::relu(diff::affine(states, w.w1, w.b1));
  Var h2 = diff::relu(diff::affine(h1, w.w2, w.b2));
  return diff::affine(h2, w.w3, w.b3);
}

RowVector actor_mean(const PolicyParams& p, const RowVector& state) {
  Tape t;
  MlpVars w = bind_mlp(t, p.actor, false);
  return t.value(mlp_forward(t.constant(state), w)).row(0);
}

double critic_value(const PolicyParams& p, const RowVector& state) {
  Tape t;
  MlpVars w = bind_mlp(t, p.critic, false);
  return t.value(mlp_forward(t.constant(state), w))(0, 0);
}

RowVector clamped_log_std(const PolicyParams& p) {
  return p.log_std.row(0).cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

double gaussian_log_prob(const RowVector& delta, const RowVector& mean,
                         const RowVector& log_std) {
  if (delta.size() != mean.size() || delta.size() != log_std.size()) {
    throw DimensionError("gaussian_log_prob: size mismatch");
  }
  double lp = -0.5 * static_cast<double>(delta.size()) * kLog2Pi;
  for (Eigen::Index i = 0; i < delta.size(); ++i) {
    const double z = (delta(i) - mean(i)) * std::exp(-log_std(i));
    lp -= 0.5 * z * z + log_std(i);
  }
  return lp;
}

ActionSample sample_action(const PolicyParams& p, const RowVector& state, SeededRng& rng) {
  const RowVector mu = actor_mean(p, state);
  const RowVector ls = clamped_log_std(p);
  RowVector delta(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    delta(i) = mu(i) + std::exp(ls(i)) * rng.normal();
  }
  return {delta, gaussian_log_prob(delta, mu, ls)};
}

ActionSample deterministic_action(const PolicyParams& p, const RowVector& state) {
  const RowVector mu = actor_mean(p, state);
  const RowVector ls = clamped_log_std(p);
  return {mu, gaussian_log_prob(mu, mu, ls)};
}

Matrix apply_action(const Matrix& embedding, const RowVector& delta, double action_scale) {
  if (embedding.cols() != delta.size()) {
    throw DimensionError("apply_action: embedding " + shape_str(embedding) + " vs delta [1x" +
                         std::to_string(delta.size()) + "]");
  }
  return embedding.rowwise() + action_scale * delta;
}

double compute_reward(double v_new, double v_old, int subset_len, int feature_count,
                      double lambda) {
  if (v_new < 0.0 || v_new > 1.0 || v_old < 0.0 || v_old > 1.0) {
    throw ContractError("compute_reward: scores must lie in [0, 1]");
  }
  if (subset_len < 1 || subset_len > feature_count) {
    throw ContractError("compute_reward: subset_len " + std::to_string(subset_len) +
                        " outside [1, " + std::to_string(feature_count) + "]");
  }
  const double brevity = 1.0 - static_cast<double>(subset_len) / static_cast<double>(feature_count);
  return lambda * (v_new - v_old) + (1.0 - lambda) * brevity;
}

}  // namespace caps::policy
