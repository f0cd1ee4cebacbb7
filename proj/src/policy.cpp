#include "odaf/policy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace odaf {

void softmax(std::span<const double> logits, std::span<double> out) {
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] /= total;
}

SoftmaxPolicy::SoftmaxPolicy(int num_states, int num_actions)
    : SoftmaxPolicy(num_states, num_actions,
                    std::vector<double>(static_cast<std::size_t>(num_states) * static_cast<std::size_t>(num_actions), 0.0)) {}

SoftmaxPolicy::SoftmaxPolicy(int num_states, int num_actions, std::vector<double> logits)
    : num_states_(num_states), num_actions_(num_actions), logits_(std::move(logits)) {
  if (num_states <= 0 || num_actions <= 0) throw std::invalid_argument("SoftmaxPolicy: dimensions must be positive");
  if (logits_.size() != static_cast<std::size_t>(num_states) * static_cast<std::size_t>(num_actions)) {
    throw std::invalid_argument("SoftmaxPolicy: logit table has wrong size");
  }
}

SoftmaxPolicy SoftmaxPolicy::near_deterministic(int num_actions, std::span<const int> actions, double margin) {
  SoftmaxPolicy policy(static_cast<int>(actions.size()), num_actions);
  for (std::size_t s = 0; s < actions.size(); ++s) {
    policy.logits(static_cast<int>(s))[static_cast<std::size_t>(actions[s])] = margin;
  }
  return policy;
}

std::vector<double> SoftmaxPolicy::probs(int state) const {
  std::vector<double> out(static_cast<std::size_t>(num_actions_));
  probs(state, out);
  return out;
}

void SoftmaxPolicy::probs(int state, std::span<double> out) const { softmax(logits(state), out); }

double SoftmaxPolicy::prob(int state, int action) const { return probs(state)[static_cast<std::size_t>(action)]; }

int SoftmaxPolicy::greedy_action(int state) const {
  const auto row = logits(state);
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

int SoftmaxPolicy::sample(int state, Rng& rng) const {
  const auto p = probs(state);
  return rng.categorical(p);
}

void SoftmaxPolicy::soft_update_from(const SoftmaxPolicy& source, double tau) {
  if (source.logits_.size() != logits_.size()) throw std::invalid_argument("soft_update_from: shape mismatch");
  for (std::size_t i = 0; i < logits_.size(); ++i) logits_[i] = (1.0 - tau) * logits_[i] + tau * source.logits_[i];
}

}  // namespace odaf
