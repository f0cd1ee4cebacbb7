#include "odaf/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace odaf {

namespace {

std::set<int> script_cells(const GridMaze& maze, const std::vector<int>& script) {
  std::set<int> cells;
  Cell at = maze.start;
  cells.insert(maze.index(at));
  for (int a : script) {
    at = maze.apply(at, static_cast<Move>(a));
    cells.insert(maze.index(at));
  }
  return cells;
}

}  // namespace

EvalReport evaluate(const SoftmaxPolicy& policy, const TabularMdp& mdp, int episodes, int horizon, std::uint64_t seed,
                    ActionSelection selection) {
  if (episodes < 1) throw std::invalid_argument("evaluate: episodes must be at least 1");
  if (horizon < 1) throw std::invalid_argument("evaluate: horizon must be at least 1");
  if (policy.num_states() != mdp.num_states || policy.num_actions() != mdp.num_actions) {
    throw std::invalid_argument("evaluate: policy shape does not match the MDP");
  }
  EvalReport report;
  report.episodes = episodes;
  report.horizon = horizon;
  report.seed = seed;
  Rng rng(seed);
  for (int e = 0; e < episodes; ++e) {
    int s = sample_initial_state(mdp, rng);
    double total = 0.0;
    for (int t = 0; t < horizon; ++t) {
      const int a = selection == ActionSelection::greedy ? policy.greedy_action(s) : policy.sample(s, rng);
      const auto result = step(mdp, s, a, rng);
      total += result.reward;
      s = result.next_state;
      if (result.done) break;
    }
    report.per_episode_returns.push_back(total);
  }
  double sum = 0.0;
  for (double r : report.per_episode_returns) sum += r;
  report.return_mean = sum / episodes;
  double var = 0.0;
  for (double r : report.per_episode_returns) var += (r - report.return_mean) * (r - report.return_mean);
  report.return_std = std::sqrt(var / episodes);
  return report;
}

std::vector<Transition> greedy_trajectory(const SoftmaxPolicy& policy, const TabularMdp& mdp, int horizon,
                                          std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Transition> out;
  int s = sample_initial_state(mdp, rng);
  for (int t = 0; t < horizon; ++t) {
    const int a = policy.greedy_action(s);
    const auto result = step(mdp, s, a, rng);
    out.push_back({s, a, result.reward, result.next_state, result.done});
    s = result.next_state;
    if (result.done) break;
  }
  return out;
}

double expected_greedy_return(const SoftmaxPolicy& policy, const TabularMdp& mdp, int horizon) {
  if (horizon < 1) throw std::invalid_argument("expected_greedy_return: horizon must be at least 1");
  const auto S = static_cast<std::size_t>(mdp.num_states);
  // value[s] = expected return of the remaining steps; terminal states end the episode
  std::vector<double> value(S, 0.0);
  std::vector<double> next(S, 0.0);
  for (int t = 0; t < horizon; ++t) {
    for (int s = 0; s < mdp.num_states; ++s) {
      if (mdp.terminal[static_cast<std::size_t>(s)]) {
        next[static_cast<std::size_t>(s)] = 0.0;
        continue;
      }
      const int a = policy.greedy_action(s);
      double v = mdp.r(s, a);
      const auto row = mdp.row(s, a);
      for (std::size_t sp = 0; sp < S; ++sp) v += row[sp] * value[sp];
      next[static_cast<std::size_t>(s)] = v;
    }
    value.swap(next);
  }
  double total = 0.0;
  for (std::size_t s = 0; s < S; ++s) total += mdp.initial_dist[s] * value[s];
  return total;
}

bool is_stitched(const std::vector<Transition>& trajectory, const GridMaze& maze) {
  const auto scripts = stitching_scripts();
  const auto detour = script_cells(maze, scripts.detour);
  const auto fragment = script_cells(maze, scripts.fragment);
  const int goal = maze.index(maze.goal);
  bool reached_goal = false;
  bool detour_only = false;
  bool fragment_only = false;
  for (const auto& t : trajectory) {
    for (int s : {t.state, t.next_state}) {
      if (s == goal) reached_goal = true;
      const bool in_d = detour.contains(s);
      const bool in_f = fragment.contains(s);
      if (in_d && !in_f) detour_only = true;
      if (in_f && !in_d) fragment_only = true;
    }
  }
  return reached_goal && detour_only && fragment_only;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json j{{"episodes", report.episodes},
                   {"horizon", report.horizon},
                   {"return_mean", report.return_mean},
                   {"return_std", report.return_std},
                   {"per_episode_returns", report.per_episode_returns},
                   {"seed", report.seed}};
  if (report.stitched) j["stitched"] = *report.stitched;
  return j;
}

}  // namespace odaf
