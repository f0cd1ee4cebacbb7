#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "odaf/dataset.hpp"
#include "odaf/mdp.hpp"
#include "odaf/policy.hpp"

namespace odaf {

struct EvalReport {
  int episodes = 0;
  int horizon = 0;
  double return_mean = 0.0;
  /// Population standard deviation of the episode returns.
  double return_std = 0.0;
  std::vector<double> per_episode_returns;
  /// Only set on the stitching maze.
  std::optional<bool> stitched;
  std::uint64_t seed = 0;
};

enum class ActionSelection { greedy, sample };

/// Undiscounted episodic returns. Greedy selection takes argmax pi with ties to
/// the lowest action index; `sample` draws from pi.
EvalReport evaluate(const SoftmaxPolicy& policy, const TabularMdp& mdp, int episodes, int horizon, std::uint64_t seed,
                    ActionSelection selection = ActionSelection::greedy);

/// One greedy episode.
std::vector<Transition> greedy_trajectory(const SoftmaxPolicy& policy, const TabularMdp& mdp, int horizon,
                                          std::uint64_t seed);

/// Exact expected undiscounted return of the greedy policy over `horizon` steps
/// from the initial distribution, by backward induction on the true model.
double expected_greedy_return(const SoftmaxPolicy& policy, const TabularMdp& mdp, int horizon);

/// True when the trajectory reaches the goal and visits at least one cell that
/// only the detour family visits and one that only the fragment family visits.
bool is_stitched(const std::vector<Transition>& trajectory, const GridMaze& maze);

nlohmann::json to_json(const EvalReport& report);

}  // namespace odaf
