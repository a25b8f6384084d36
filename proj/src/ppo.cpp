#include "caps/ppo.hpp"

#include <cmath>
#include <numeric>

namespace caps::policy {

using diff::Tape;
using diff::Var;

namespace {
constexpr double kLog2Pi = 1.8378770664093453;
}

void Trajectory::clear() {
  states.clear();
  actions.clear();
  log_probs.clear();
  rewards.clear();
  returns.clear();
  advantages.clear();
  values.clear();
}

void Trajectory::append(const Trajectory& other) {
  states.insert(states.end(), other.states.begin(), other.states.end());
  actions.insert(actions.end(), other.actions.begin(), other.actions.end());
  log_probs.insert(log_probs.end(), other.log_probs.begin(), other.log_probs.end());
  rewards.insert(rewards.end(), other.rewards.begin(), other.rewards.end());
  returns.insert(returns.end(), other.returns.begin(), other.returns.end());
  advantages.insert(advantages.end(), other.advantages.begin(), other.advantages.end());
  values.insert(values.end(), other.values.begin(), other.values.end());
}

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
  if (rewards.empty()) throw ContractError("discounted_returns: empty reward list");
  std::vector<double> g(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    g[i] = acc;
  }
  return g;
}

double critic_loss_value(std::span<const double> values, std::span<const double> returns) {
  if (values.size() != returns.size()) {
    throw DimensionError("critic_loss: " + std::to_string(values.size()) + " values vs " +
                         std::to_string(returns.size()) + " returns");
  }
  if (values.empty()) throw ContractError("critic_loss: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = values[i] - returns[i];
    total += d * d;
  }
  return total / static_cast<double>(values.size());
}

std::vector<double> normalize_advantages(std::span<const double> advantages) {
  const double n = static_cast<double>(advantages.size());
  double mean = 0.0;
  for (double a : advantages) mean += a;
  mean /= n;
  double var = 0.0;
  for (double a : advantages) var += (a - mean) * (a - mean);
  const double std_dev = std::sqrt(var / n);
  std::vector<double> out(advantages.size(), 0.0);
  if (std_dev > 1e-8) {
    for (std::size_t i = 0; i < advantages.size(); ++i) out[i] = (advantages[i] - mean) / std_dev;
  }
  return out;
}

double actor_loss_value(std::span<const double> new_log_probs,
                        std::span<const double> old_log_probs,
                        std::span<const double> advantages, double clip_eps) {
  if (new_log_probs.size() != old_log_probs.size() || new_log_probs.size() != advantages.size()) {
    throw DimensionError("actor_loss: input lengths disagree");
  }
  if (new_log_probs.empty()) throw ContractError("actor_loss: empty input");
  const std::vector<double> adv = normalize_advantages(advantages);
  double total = 0.0;
  for (std::size_t i = 0; i < adv.size(); ++i) {
    const double r = std::exp(new_log_probs[i] - old_log_probs[i]);
    const double clipped = std::clamp(r, 1.0 - clip_eps, 1.0 + clip_eps);
    total += std::min(r * adv[i], clipped * adv[i]);
  }
  return -total / static_cast<double>(adv.size());
}

Var actor_loss_node(Var new_log_probs, std::span<const double> old_log_probs,
                    std::span<const double> advantages, double clip_eps) {
  Tape& t = *new_log_probs.tape;
  const Eigen::Index b = t.value(new_log_probs).rows();
  if (static_cast<std::size_t>(b) != old_log_probs.size() ||
      static_cast<std::size_t>(b) != advantages.size()) {
    throw DimensionError("actor_loss: input lengths disagree");
  }
  Matrix old_lp(b, 1), adv(b, 1);
  for (Eigen::Index i = 0; i < b; ++i) {
    old_lp(i, 0) = old_log_probs[static_cast<std::size_t>(i)];
    adv(i, 0) = advantages[static_cast<std::size_t>(i)];
  }
  Var ratio = diff::exp(diff::sub(new_log_probs, t.constant(old_lp)));
  Var adv_const = t.constant(adv);
  Var unclipped = diff::mul(ratio, adv_const);
  Var clipped = diff::mul(diff::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps), adv_const);
  return diff::scale(diff::mean_all(diff::minimum(unclipped, clipped)), -1.0);
}

Var log_prob_node(Var states, Var actions_const, const MlpVars& actor, Var log_std) {
  Tape& t = *states.tape;
  Var mu = mlp_forward(states, actor);
  const Eigen::Index action_dim = t.value(mu).cols();
  Var ls = diff::clamp(log_std, kLogStdMin, kLogStdMax);
  Var delta = diff::sub(actions_const, mu);
  Var weighted = diff::mul_rowwise(diff::mul(delta, delta), diff::exp(diff::scale(ls, -2.0)));
  Var quad = diff::scale(diff::sum_rows(weighted), -0.5);
  Var ls_sum = diff::scale(diff::sum_all(ls), -1.0);
  return diff::add_const(diff::add_scalar_bcast(quad, ls_sum),
                         -0.5 * static_cast<double>(action_dim) * kLog2Pi);
}

std::vector<PpoDiagnostics> ppo_update(const Trajectory& buffer, PolicyParams& params,
                                       PpoState& state, const SearchConfig& config,
                                       SeededRng& rng) {
  const std::size_t n = buffer.size();
  if (n < static_cast<std::size_t>(config.ppo_batch)) {
    throw ContractError("ppo_update: " + std::to_string(n) + " steps collected, need at least " +
                        std::to_string(config.ppo_batch));
  }
  const std::size_t batch = static_cast<std::size_t>(config.ppo_batch);
  const Eigen::Index state_dim = buffer.states.front().size();
  const Eigen::Index action_dim = buffer.actions.front().size();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<PpoDiagnostics> diagnostics;
  for (int epoch = 0; epoch < config.ppo_epochs; ++epoch) {
    rng.shuffle(order);
    const std::size_t batches = n / batch;  // drop the remainder each pass
    for (std::size_t bidx = 0; bidx < batches; ++bidx) {
      Matrix states(batch, state_dim);
      Matrix actions(batch, action_dim);
      std::vector<double> old_lp(batch), adv_raw(batch), returns(batch);
      for (std::size_t i = 0; i < batch; ++i) {
        const std::size_t idx = order[bidx * batch + i];
        states.row(static_cast<Eigen::Index>(i)) = buffer.states[idx];
        actions.row(static_cast<Eigen::Index>(i)) = buffer.actions[idx];
        old_lp[i] = buffer.log_probs[idx];
        adv_raw[i] = buffer.advantages[idx];
        returns[i] = buffer.returns[idx];
      }
      const std::vector<double> adv = normalize_advantages(adv_raw);

      PpoDiagnostics diag;

      // Actor step.
      {
        Tape t;
        MlpVars actor = bind_mlp(t, params.actor, true);
        Var log_std = t.make_leaf(params.log_std, true);
        Var new_lp = log_prob_node(t.constant(states), t.constant(actions), actor, log_std);
        Var loss = actor_loss_node(new_lp, old_lp, adv, config.clip_eps);
        diag.actor_loss = diff::scalar_value(loss);

        const Matrix& lp_values = t.value(new_lp);
        double ratio_sum = 0.0;
        int clipped_count = 0;
        double max_excess = -1e300;
        for (std::size_t i = 0; i < batch; ++i) {
          const double r = std::exp(lp_values(static_cast<Eigen::Index>(i), 0) - old_lp[i]);
          ratio_sum += r;
          if (r < 1.0 - config.clip_eps || r > 1.0 + config.clip_eps) ++clipped_count;
          const double clipped = std::clamp(r, 1.0 - config.clip_eps, 1.0 + config.clip_eps);
          const double surr = std::min(r * adv[i], clipped * adv[i]);
          max_excess = std::max(max_excess, surr - r * adv[i]);
        }
        diag.mean_ratio = ratio_sum / static_cast<double>(batch);
        diag.clip_fraction = static_cast<double>(clipped_count) / static_cast<double>(batch);
        diag.max_surrogate_excess = max_excess;

        t.backward(loss);
        std::vector<Var> flat{actor.w1, actor.b1, actor.w2, actor.b2, actor.w3, actor.b3, log_std};
        std::vector<Matrix> grads;
        grads.reserve(flat.size());
        for (Var v : flat) {
          grads.push_back(t.has_grad(v) ? t.grad(v)
                                        : Matrix::Zero(t.value(v).rows(), t.value(v).cols()));
        }
        std::vector<const Matrix*> grad_ptrs;
        for (const Matrix& g : grads) grad_ptrs.push_back(&g);
        diff::adam_step(actor_param_list(params), grad_ptrs, state.actor_adam, config.lr_actor);
      }

      // Critic step.
      {
        Tape t;
        MlpVars critic = bind_mlp(t, params.critic, true);
        Var values = mlp_forward(t.constant(states), critic);
        Matrix ret(batch, 1);
        for (std::size_t i = 0; i < batch; ++i) ret(static_cast<Eigen::Index>(i), 0) = returns[i];
        Var err = diff::sub(values, t.constant(ret));
        Var loss = diff::mean_all(diff::mul(err, err));
        diag.critic_loss = diff::scalar_value(loss);

        t.backward(loss);
        std::vector<Var> flat{critic.w1, critic.b1, critic.w2, critic.b2, critic.w3, critic.b3};
        std::vector<Matrix> grads;
        for (Var v : flat) {
          grads.push_back(t.has_grad(v) ? t.grad(v)
                                        : Matrix::Zero(t.value(v).rows(), t.value(v).cols()));
        }
        std::vector<const Matrix*> grad_ptrs;
        for (const Matrix& g : grads) grad_ptrs.push_back(&g);
        diff::adam_step(critic_param_list(params), grad_ptrs, state.critic_adam, config.lr_critic);
      }

      diagnostics.push_back(diag);
    }
  }
  return diagnostics;
}

}  // namespace caps::policy
