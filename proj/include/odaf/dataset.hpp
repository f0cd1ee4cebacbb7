#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "odaf/mdp.hpp"
#include "odaf/policy.hpp"

namespace odaf {

struct Transition {
  int state = 0;
  int action = 0;
  double reward = 0.0;
  int next_state = 0;
  bool done = false;

  friend bool operator==(const Transition&, const Transition&) = default;
};

/// Immutable offline dataset with visit-count indexes.
///
/// The state support holds every state seen either as a source state or as a
/// next state: next states are visited along the behavior trajectories, so they
/// belong to the support of the behavior state distribution.
class TransitionDataset {
 public:
  TransitionDataset() = default;
  /// `episode_starts` lists the index of the first transition of each episode;
  /// when empty, episodes are inferred from state continuity.
  TransitionDataset(int num_states, int num_actions, std::vector<Transition> transitions,
                    std::string source_id = {}, std::vector<std::size_t> episode_starts = {});

  int num_states() const { return num_states_; }
  int num_actions() const { return num_actions_; }
  const std::string& source_id() const { return source_id_; }
  std::size_t size() const { return transitions_.size(); }
  bool empty() const { return transitions_.empty(); }
  const std::vector<Transition>& transitions() const { return transitions_; }
  const Transition& operator[](std::size_t i) const { return transitions_[i]; }

  int count_s(int s) const { return counts_s_[static_cast<std::size_t>(s)]; }
  int count_sa(int s, int a) const { return counts_sa_[pair_index(s, a)]; }
  int count_sas(int s, int a, int next) const;
  /// Next-state histogram of (s,a), sorted by next state.
  const std::map<int, int>& next_counts(int s, int a) const { return counts_sas_[pair_index(s, a)]; }

  bool in_state_support(int s) const { return state_support_[static_cast<std::size_t>(s)]; }
  bool in_pair_support(int s, int a) const { return count_sa(s, a) > 0; }
  /// Sorted list of supported states.
  std::vector<int> state_support() const;
  /// Sorted list of states with N(s) > 0.
  std::vector<int> visited_states() const;
  /// States reached through a transition flagged done.
  std::vector<int> terminal_states() const;
  /// States observed anywhere as a next state.
  std::vector<int> observed_next_states() const;

  /// Empirical behavior policy N(s,a)/N(s). Requires N(s) > 0.
  std::vector<double> behavior_policy(int s) const;

  const std::vector<std::size_t>& episode_starts() const { return episode_starts_; }
  /// Undiscounted return of each episode, in order.
  std::vector<double> episode_returns() const;
  /// Transitions of episode `i`.
  std::span<const Transition> episode(std::size_t i) const;

 private:
  std::size_t pair_index(int s, int a) const {
    return static_cast<std::size_t>(s) * static_cast<std::size_t>(num_actions_) + static_cast<std::size_t>(a);
  }

  int num_states_ = 0;
  int num_actions_ = 0;
  std::string source_id_;
  std::vector<Transition> transitions_;
  std::vector<std::size_t> episode_starts_;
  std::vector<int> counts_s_;
  std::vector<int> counts_sa_;
  std::vector<std::map<int, int>> counts_sas_;
  std::vector<bool> state_support_;
  std::vector<bool> terminal_seen_;
};

/// Stable identifier for an MDP's shape and tables, used to refuse mixing
/// datasets drawn from different environments.
std::string mdp_identifier(const TabularMdp& mdp);

/// Episodic rollouts of a stochastic policy from the MDP's initial distribution.
/// Episodes stop at a terminal state or after `horizon` steps.
TransitionDataset rollout(const TabularMdp& mdp, const SoftmaxPolicy& policy, int episodes, int horizon,
                          std::uint64_t seed);
/// Same, replaying a fixed action sequence; an episode ends when the sequence runs out.
TransitionDataset rollout(const TabularMdp& mdp, std::span<const int> actions, int episodes, int horizon,
                          std::uint64_t seed);

/// Action scripts of the two trajectory families in the stitching maze.
struct StitchingScripts {
  /// S -> A -> B -> G over the top row.
  std::vector<int> detour;
  /// S -> M, then into the dead-end pocket below M; never reaches G.
  std::vector<int> fragment;
};
StitchingScripts stitching_scripts();

/// Equal numbers of detour and fragment episodes, in a seed-shuffled order.
/// Throws std::invalid_argument unless `maze` is the stitching maze.
TransitionDataset make_stitching_dataset(const GridMaze& maze, int episodes_per_family, std::uint64_t seed);

enum class MixGranularity { transition, trajectory };

/// Draws round(ratio * n) items from `random` and the rest from `expert`, where
/// n = min(|expert|, |random|), without replacement, then shuffles.
TransitionDataset mix_datasets(const TransitionDataset& expert, const TransitionDataset& random, double random_ratio,
                               std::uint64_t seed, MixGranularity granularity = MixGranularity::transition);

/// JSON Lines, one transition per line: {"s":..,"a":..,"r":..,"sp":..,"done":..}.
void save_dataset(const TransitionDataset& dataset, const std::filesystem::path& path);
std::string dataset_to_jsonl(const TransitionDataset& dataset);
/// Dimensions default to (max index + 1) when not given. Throws ParseError with
/// the 1-based line number on malformed input.
TransitionDataset load_dataset(const std::filesystem::path& path, std::optional<int> num_states = {},
                               std::optional<int> num_actions = {});
TransitionDataset dataset_from_jsonl(const std::string& text, std::optional<int> num_states = {},
                                     std::optional<int> num_actions = {});

}  // namespace odaf
