#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "odaf/rng.hpp"

namespace odaf {

/// Finite MDP with state-action rewards.
///
/// Transition probabilities are stored densely as [state][action][next_state].
/// Terminal states self-loop with zero reward so infinite-horizon value math
/// agrees with episodic evaluation.
struct TabularMdp {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> transition;
  std::vector<double> reward;
  double discount = 0.9;
  std::vector<double> initial_dist;
  std::vector<bool> terminal;
  /// Declared reward bound, |reward| <= r_max.
  double r_max = 0.0;

  std::span<const double> row(int state, int action) const {
    return {transition.data() + row_offset(state, action), static_cast<std::size_t>(num_states)};
  }
  std::span<double> row(int state, int action) {
    return {transition.data() + row_offset(state, action), static_cast<std::size_t>(num_states)};
  }
  double p(int state, int action, int next_state) const {
    return transition[row_offset(state, action) + static_cast<std::size_t>(next_state)];
  }
  double r(int state, int action) const {
    return reward[static_cast<std::size_t>(state) * num_actions + action];
  }
  double& r(int state, int action) {
    return reward[static_cast<std::size_t>(state) * num_actions + action];
  }

  /// Throws std::invalid_argument naming the first violated invariant.
  void validate() const;

 private:
  std::size_t row_offset(int state, int action) const {
    return (static_cast<std::size_t>(state) * num_actions + action) * num_states;
  }
};

/// Allocates an MDP with all-zero tables.
TabularMdp make_empty_mdp(int num_states, int num_actions, double discount);

/// Random MDP where every (s,a) reaches exactly `branching` distinct next states.
/// Rewards are uniform in [-r_max, r_max]; the initial distribution is uniform.
TabularMdp build_random_mdp(int num_states, int num_actions, int branching, double r_max,
                            double discount, std::uint64_t seed);

struct StepResult {
  int next_state;
  double reward;
  bool done;
};

/// Samples one transition. `done` is true iff the next state is terminal.
StepResult step(const TabularMdp& mdp, int state, int action, Rng& rng);

/// Samples an initial state from mdp.initial_dist.
int sample_initial_state(const TabularMdp& mdp, Rng& rng);

// ---------------------------------------------------------------------------
// Grid mazes

struct Cell {
  int row = 0;
  int col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

/// Action order is fixed: up, down, left, right.
enum class Move : int { up = 0, down = 1, left = 2, right = 3 };
inline constexpr int kNumMoves = 4;
std::string_view move_name(int action);

struct GridMaze {
  int width = 0;
  int height = 0;
  /// Row-major, width*height entries.
  std::vector<bool> walls;
  Cell start;
  Cell goal;
  /// Probability mass moved to the two lateral directions (split evenly).
  double slip_prob = 0.0;
  double step_reward = -1.0;
  /// Paid on top of step_reward when entering the goal.
  double goal_reward = 50.0;
  int horizon = 100;
  double discount = 0.95;

  int num_cells() const { return width * height; }
  int index(Cell c) const { return c.row * width + c.col; }
  Cell cell(int index) const { return {index / width, index % width}; }
  bool in_bounds(Cell c) const { return c.row >= 0 && c.row < height && c.col >= 0 && c.col < width; }
  bool is_wall(Cell c) const { return walls[static_cast<std::size_t>(index(c))]; }
  bool is_wall(int index) const { return walls[static_cast<std::size_t>(index)]; }
  bool is_open(Cell c) const { return in_bounds(c) && !is_wall(c); }

  /// Cell reached by an unobstructed move; walls and borders leave the agent in place.
  Cell apply(Cell from, Move move) const;

  void validate() const;
  std::string to_text() const;

  friend bool operator==(const GridMaze&, const GridMaze&) = default;
};

/// Parses a plain-text grid: '#' wall, '.' floor, 'S' start, 'G' goal, one row per line.
/// Blank trailing lines are ignored. Non-grid parameters are copied from `params`.
GridMaze parse_maze(std::string_view text, const GridMaze& params = {});
GridMaze load_maze(const std::filesystem::path& path, const GridMaze& params = {});

/// Fixed 7x7 maze with two routes from S to G: a 12-step detour S->A->B->G over
/// the top row and a 6-step corridor S->M->G along row 3. A dead-end pocket hangs
/// below M.
GridMaze stitching_maze();

/// Named cells of the stitching maze.
struct StitchingLandmarks {
  Cell start, a, b, m, goal;
};
StitchingLandmarks stitching_landmarks();

/// Deterministic compilation: cell index == state index. Walls and the goal are
/// absorbing terminal states.
TabularMdp compile(const GridMaze& maze);

}  // namespace odaf
