#pragma once

#include <span>
#include <vector>

#include "odaf/rng.hpp"

namespace odaf {

/// Tabular stochastic policy pi(a|s) = softmax(logits[s])_a.
///
/// Rows are valid distributions by construction; all entries are strictly
/// positive as long as logits stay finite.
class SoftmaxPolicy {
 public:
  SoftmaxPolicy() = default;
  /// Uniform policy (all logits zero).
  SoftmaxPolicy(int num_states, int num_actions);
  SoftmaxPolicy(int num_states, int num_actions, std::vector<double> logits);

  /// Nearly deterministic policy choosing `actions[s]` with logit margin `margin`.
  static SoftmaxPolicy near_deterministic(int num_actions, std::span<const int> actions, double margin = 40.0);

  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }

  std::span<const double> logits(int state) const {
    return {logits_.data() + offset(state), static_cast<std::size_t>(num_actions_)};
  }
  std::span<double> logits(int state) {
    return {logits_.data() + offset(state), static_cast<std::size_t>(num_actions_)};
  }
  const std::vector<double>& all_logits() const { return logits_; }
  std::vector<double>& all_logits() { return logits_; }

  /// Action distribution at `state`.
  std::vector<double> probs(int state) const;
  void probs(int state, std::span<double> out) const;
  double prob(int state, int action) const;

  /// argmax of the logits, ties to the lowest action index.
  int greedy_action(int state) const;
  int sample(int state, Rng& rng) const;

  /// logits <- (1 - tau) * logits + tau * source.logits
  void soft_update_from(const SoftmaxPolicy& source, double tau);

  friend bool operator==(const SoftmaxPolicy&, const SoftmaxPolicy&) = default;

 private:
  std::size_t offset(int state) const { return static_cast<std::size_t>(state) * static_cast<std::size_t>(num_actions_); }

  int num_states_ = 0;
  int num_actions_ = 0;
  std::vector<double> logits_;
};

/// Numerically stable softmax.
void softmax(std::span<const double> logits, std::span<double> out);

}  // namespace odaf
