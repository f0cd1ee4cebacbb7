#include "odaf/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace odaf {

QEnsemble::QEnsemble(int num_states, int num_actions, const EnsembleParams& params, std::uint64_t seed)
    : num_states_(num_states), num_actions_(num_actions), params_(params), mask_rng_(mix_seed(seed, 1)) {
  if (params.k < 2) throw std::invalid_argument("QEnsemble: k must be at least 2");
  if (num_states <= 0 || num_actions <= 0) throw std::invalid_argument("QEnsemble: dimensions must be positive");
  if (!(params.init_spread >= 0.0)) throw std::invalid_argument("QEnsemble: init_spread must be non-negative");
  if (!(params.tau >= 0.0 && params.tau <= 1.0)) throw std::invalid_argument("QEnsemble: tau must lie in [0,1]");
  const std::size_t n = static_cast<std::size_t>(params.k) * static_cast<std::size_t>(num_states) *
                        static_cast<std::size_t>(num_actions);
  members_.resize(n);
  Rng init_rng(mix_seed(seed, 0));
  for (auto& v : members_) v = init_rng.uniform(-params.init_spread, params.init_spread);
  targets_ = members_;
}

double QEnsemble::uncertainty(int s, int a) const {
  double mean = 0.0;
  for (int k = 0; k < params_.k; ++k) mean += members_[index(k, s, a)];
  mean /= params_.k;
  double var = 0.0;
  for (int k = 0; k < params_.k; ++k) {
    const double d = members_[index(k, s, a)] - mean;
    var += d * d;
  }
  return params_.beta_u * std::sqrt(var / params_.k);
}

double QEnsemble::state_uncertainty(std::span<const double> action_probs, int s) const {
  double total = 0.0;
  for (int a = 0; a < num_actions_; ++a) total += action_probs[static_cast<std::size_t>(a)] * uncertainty(s, a);
  return total;
}

double QEnsemble::state_uncertainty(const SoftmaxPolicy& policy, int s) const {
  return state_uncertainty(policy.probs(s), s);
}

std::vector<double> QEnsemble::uncertainty_table() const {
  std::vector<double> out(static_cast<std::size_t>(num_states_) * static_cast<std::size_t>(num_actions_));
  for (int s = 0; s < num_states_; ++s) {
    for (int a = 0; a < num_actions_; ++a) out[static_cast<std::size_t>(s) * num_actions_ + a] = uncertainty(s, a);
  }
  return out;
}

double QEnsemble::min_target(int s, int a) const {
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < params_.k; ++k) best = std::min(best, targets_[index(k, s, a)]);
  return best;
}

double QEnsemble::soft_target(const Transition& t, const SoftmaxPolicy& policy, double entropy_coef) const {
  if (t.done) return t.reward;
  const auto probs = policy.probs(t.next_state);
  double soft_value = 0.0;
  for (int a = 0; a < num_actions_; ++a) {
    const double p = probs[static_cast<std::size_t>(a)];
    soft_value += p * (min_target(t.next_state, a) - entropy_coef * std::log(p));
  }
  return t.reward + params_.discount * soft_value;
}

double QEnsemble::td_update(std::span<const Transition> batch, const SoftmaxPolicy& policy, double entropy_coef) {
  // targets come from the target tables only, so they can all be computed up front
  std::vector<double> y(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) y[i] = soft_target(batch[i], policy, entropy_coef);

  double loss = 0.0;
  std::size_t trained = 0;
  for (int k = 0; k < params_.k; ++k) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      if (!mask_rng_.bernoulli(params_.mask_prob)) continue;
      double& q = members_[index(k, batch[i].state, batch[i].action)];
      const double err = q - y[i];
      loss += err * err;
      ++trained;
      q -= params_.learning_rate * err;
    }
  }
  return trained > 0 ? loss / static_cast<double>(trained) : 0.0;
}

double QEnsemble::td_loss(std::span<const Transition> batch, const SoftmaxPolicy& policy, double entropy_coef) const {
  if (batch.empty()) return 0.0;
  double loss = 0.0;
  for (const auto& t : batch) {
    const double y = soft_target(t, policy, entropy_coef);
    for (int k = 0; k < params_.k; ++k) {
      const double err = members_[index(k, t.state, t.action)] - y;
      loss += err * err;
    }
  }
  return loss / (static_cast<double>(batch.size()) * params_.k);
}

void QEnsemble::soft_update() {
  const double tau = params_.tau;
  for (std::size_t i = 0; i < targets_.size(); ++i) targets_[i] = (1.0 - tau) * targets_[i] + tau * members_[i];
}

void QEnsemble::pin_state(int s, double value) {
  for (int k = 0; k < params_.k; ++k) {
    for (int a = 0; a < num_actions_; ++a) {
      members_[index(k, s, a)] = value;
      targets_[index(k, s, a)] = value;
    }
  }
}

nlohmann::json QEnsemble::to_json() const {
  return {{"format", "odaf-ensemble-v1"},
          {"shape", {params_.k, num_states_, num_actions_}},
          {"params",
           {{"beta_u", params_.beta_u},
            {"tau", params_.tau},
            {"learning_rate", params_.learning_rate},
            {"init_spread", params_.init_spread},
            {"discount", params_.discount},
            {"mask_prob", params_.mask_prob}}},
          {"members", members_},
          {"targets", targets_}};
}

QEnsemble QEnsemble::from_json(const nlohmann::json& j) {
  if (j.at("format").get<std::string>() != "odaf-ensemble-v1") throw std::invalid_argument("unknown ensemble format");
  const auto shape = j.at("shape").get<std::vector<int>>();
  if (shape.size() != 3) throw std::invalid_argument("ensemble shape must have three entries");
  EnsembleParams params;
  params.k = shape[0];
  const auto& p = j.at("params");
  params.beta_u = p.at("beta_u").get<double>();
  params.tau = p.at("tau").get<double>();
  params.learning_rate = p.at("learning_rate").get<double>();
  params.init_spread = p.at("init_spread").get<double>();
  params.discount = p.at("discount").get<double>();
  params.mask_prob = p.at("mask_prob").get<double>();
  QEnsemble e(shape[1], shape[2], params, 0);
  e.members_ = j.at("members").get<std::vector<double>>();
  e.targets_ = j.at("targets").get<std::vector<double>>();
  if (e.members_.size() != e.targets_.size() ||
      e.members_.size() != static_cast<std::size_t>(shape[0]) * shape[1] * shape[2]) {
    throw std::invalid_argument("ensemble tables do not match the declared shape");
  }
  return e;
}

}  // namespace odaf
