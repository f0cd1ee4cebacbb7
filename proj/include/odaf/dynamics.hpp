#pragma once

#include <optional>
#include <span>
#include <vector>

#include "odaf/dataset.hpp"
#include "odaf/mdp.hpp"
#include "odaf/policy.hpp"

namespace odaf {

/// Layout information used for perturbation neighborhoods and for generalizing
/// observed moves to unseen (state, action) pairs.
///
/// Grid geometry: Chebyshev balls over non-wall cells. Graph geometry: hop
/// balls over the MDP's transition graph.
class Geometry {
 public:
  static Geometry grid(const GridMaze& maze);
  static Geometry graph(const TabularMdp& mdp);

  bool is_grid() const { return is_grid_; }
  int num_states() const { return num_states_; }
  int width() const { return width_; }
  int height() const { return height_; }
  bool is_wall(int state) const { return is_grid_ && walls_[static_cast<std::size_t>(state)]; }

  /// Sorted set of states within `radius` of `state`; always contains `state`.
  std::vector<int> neighborhood(int state, int radius) const;

 private:
  bool is_grid_ = false;
  int num_states_ = 0;
  int width_ = 0;
  int height_ = 0;
  std::vector<bool> walls_;
  std::vector<std::vector<int>> adjacency_;
};

/// Discrete perturbation ball standing in for a continuous epsilon-ball.
std::vector<int> perturb_neighborhood(const Geometry& geometry, int state, int radius);

struct Outcome {
  int state;
  double prob;
};

/// How a dynamics row was obtained.
enum class RowKind {
  /// Counted from the dataset.
  observed,
  /// Unseen pair; row predicted by translating the action's displacement
  /// distribution observed elsewhere on the grid. States where the dataset
  /// saw episodes end are predicted to absorb.
  predicted,
  /// Unseen pair with no basis for prediction; uniform over all states.
  fallback,
};

struct DynamicsOptions {
  /// Laplace constant added to every next state observed anywhere in the dataset.
  double smoothing = 0.0;
  /// A pair counts as supported when N(s,a) >= min_count.
  int min_count = 1;
  /// Grid layout used to predict rows of unseen pairs. Only the grid
  /// dimensions are consulted; walls stay unknown to the model.
  std::optional<Geometry> outcome_geometry;
};

/// Count-based estimate of P(s'|s,a) plus dataset support queries.
class EmpiricalDynamics {
 public:
  static EmpiricalDynamics fit(const TransitionDataset& dataset, const DynamicsOptions& options = {});

  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }
  double smoothing() const { return smoothing_; }

  std::span<const Outcome> row(int state, int action) const { return rows_[pair(state, action)]; }
  RowKind kind(int state, int action) const { return kinds_[pair(state, action)]; }
  bool is_fallback(int state, int action) const { return kind(state, action) == RowKind::fallback; }
  /// Mean observed reward for supported pairs, predicted otherwise.
  double reward(int state, int action) const { return rewards_[pair(state, action)]; }

  bool in_state_support(int state) const { return state_support_[static_cast<std::size_t>(state)]; }
  bool pair_supported(int state, int action) const { return kind(state, action) == RowKind::observed; }
  const std::vector<int>& support_states() const { return support_list_; }
  /// Probability mass of row (s,a) on states outside the support.
  double row_ood_mass(int state, int action) const;

  /// Dense P-hat(.|s,a).
  std::vector<double> dense_row(int state, int action) const;

 private:
  std::size_t pair(int s, int a) const {
    return static_cast<std::size_t>(s) * static_cast<std::size_t>(num_actions_) + static_cast<std::size_t>(a);
  }

  int num_states_ = 0;
  int num_actions_ = 0;
  double smoothing_ = 0.0;
  std::vector<std::vector<Outcome>> rows_;
  std::vector<RowKind> kinds_;
  std::vector<double> rewards_;
  std::vector<bool> state_support_;
  std::vector<int> support_list_;
};

/// fit with only a smoothing constant.
EmpiricalDynamics fit_empirical(const TransitionDataset& dataset, double smoothing);

/// P(s'|s,pi) = sum_a pi(a|s) P-hat(s'|s,a).
struct TransitionedDist {
  std::vector<double> probs;
  /// True where some of the mass arrived through a fallback row.
  std::vector<bool> via_fallback;
};

/// Throws SupportError when `state` is outside the support.
TransitionedDist transitioned_dist(const EmpiricalDynamics& dyn, int state, std::span<const double> action_probs);
TransitionedDist transitioned_dist(const EmpiricalDynamics& dyn, int state, const SoftmaxPolicy& policy);

/// Mass of the transitioned distribution outside the state support.
double ood_mass(const EmpiricalDynamics& dyn, int state, std::span<const double> action_probs);
double ood_mass(const EmpiricalDynamics& dyn, int state, const SoftmaxPolicy& policy);

}  // namespace odaf
