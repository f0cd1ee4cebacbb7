#pragma once

#include <optional>
#include <string>

#include "odaf/dynamics.hpp"
#include "odaf/mdp.hpp"

namespace odaf {

/// An MDP bundled with its layout and episode horizon.
struct Environment {
  std::string name;
  TabularMdp mdp;
  Geometry geometry;
  std::optional<GridMaze> maze;
  int horizon = 100;
};

Environment make_environment(const GridMaze& maze, std::string name = "maze");
Environment make_environment(TabularMdp mdp, int horizon, std::string name = "mdp");

/// Parses an environment spec:
///   stitching              the fixed stitching maze
///   open10 | partial10     built-in 10x10 mazes
///   maze:<path>            maze text file (optional ",slip=<p>")
///   random:<S>,<A>,<B>,<seed>  random MDP (gamma 0.9, r_max 1, horizon 50)
Environment parse_environment(const std::string& spec);

/// 10x10 maze used by the mixed-ratio sweep.
GridMaze open_maze_10();
/// 10x10 maze with slip used for partial-coverage experiments.
GridMaze partial_maze_10();

}  // namespace odaf
