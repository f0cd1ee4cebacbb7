#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "odaf/dataset.hpp"
#include "odaf/policy.hpp"
#include "odaf/rng.hpp"

namespace odaf {

struct EnsembleParams {
  int k = 10;
  /// Scale of the std-based uncertainty.
  double beta_u = 1.0;
  /// Soft target update rate.
  double tau = 0.01;
  double learning_rate = 0.1;
  double init_spread = 1.0;
  double discount = 0.95;
  /// Probability that a member trains on a given batch element.
  double mask_prob = 0.8;
};

/// K tabular Q functions with target copies.
///
/// Members are decorrelated by independent random initialization and by
/// per-member bootstrap masks over every batch; their disagreement is the
/// uncertainty signal. Single-writer: td_update and soft_update mutate state.
class QEnsemble {
 public:
  QEnsemble() = default;
  /// Throws std::invalid_argument for k < 2.
  QEnsemble(int num_states, int num_actions, const EnsembleParams& params, std::uint64_t seed);

  int size() const { return params_.k; }
  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }
  const EnsembleParams& params() const { return params_; }

  double member(int k, int s, int a) const { return members_[index(k, s, a)]; }
  double& member(int k, int s, int a) { return members_[index(k, s, a)]; }
  double target(int k, int s, int a) const { return targets_[index(k, s, a)]; }
  double& target(int k, int s, int a) { return targets_[index(k, s, a)]; }

  /// beta_u times the population standard deviation over members.
  double uncertainty(int s, int a) const;
  /// sum_a pi(a|s) U(s,a).
  double state_uncertainty(std::span<const double> action_probs, int s) const;
  double state_uncertainty(const SoftmaxPolicy& policy, int s) const;
  /// Full U table, [s][a] row-major.
  std::vector<double> uncertainty_table() const;

  double min_target(int s, int a) const;

  /// Soft TD target r + gamma * E_{a'~pi}[min_j Q'_j(s',a') - entropy_coef log pi(a'|s')];
  /// terminal transitions use r alone.
  double soft_target(const Transition& t, const SoftmaxPolicy& policy, double entropy_coef) const;

  /// One masked SGD step per member on the squared TD error. Returns the mean
  /// squared TD error over all (member, element) pairs that were trained,
  /// measured before the step.
  double td_update(std::span<const Transition> batch, const SoftmaxPolicy& policy, double entropy_coef);
  /// Mean squared TD error without updating anything.
  double td_loss(std::span<const Transition> batch, const SoftmaxPolicy& policy, double entropy_coef) const;

  /// targets <- (1 - tau) targets + tau members.
  void soft_update();

  /// Sets Q(s,.) to `value` in every member and target (known terminal states).
  void pin_state(int s, double value = 0.0);

  nlohmann::json to_json() const;
  static QEnsemble from_json(const nlohmann::json& j);

  friend bool operator==(const QEnsemble& x, const QEnsemble& y) {
    return x.num_states_ == y.num_states_ && x.num_actions_ == y.num_actions_ && x.members_ == y.members_ &&
           x.targets_ == y.targets_;
  }

 private:
  std::size_t index(int k, int s, int a) const {
    return (static_cast<std::size_t>(k) * static_cast<std::size_t>(num_states_) + static_cast<std::size_t>(s)) *
               static_cast<std::size_t>(num_actions_) +
           static_cast<std::size_t>(a);
  }

  int num_states_ = 0;
  int num_actions_ = 0;
  EnsembleParams params_;
  std::vector<double> members_;
  std::vector<double> targets_;
  Rng mask_rng_{0};
};

}  // namespace odaf
