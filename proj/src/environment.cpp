#include "odaf/environment.hpp"

#include <stdexcept>
#include <string_view>

namespace odaf {

namespace {

constexpr std::string_view kOpenLayout =
    "S...#.....\n"
    ".##.#.##..\n"
    ".#..#..#..\n"
    ".#.###.#.#\n"
    "...#...#..\n"
    "##.#.###..\n"
    "...#...#..\n"
    ".###.#.##.\n"
    ".....#....\n"
    ".#.###..#G\n";

// a single corridor using all four moves, with dead-end alcoves beside it
constexpr std::string_view kPartialLayout =
    "S.....####\n"
    "#.###..###\n"
    "#####.####\n"
    "##....####\n"
    "#..####...\n"
    "##...##.#.\n"
    "##......#.\n"
    "########..\n"
    "#########.\n"
    "#########G\n";

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::size_t begin = 0;
  while (true) {
    const auto end = text.find(sep, begin);
    out.push_back(text.substr(begin, end - begin));
    if (end == std::string::npos) break;
    begin = end + 1;
  }
  return out;
}

}  // namespace

Environment make_environment(const GridMaze& maze, std::string name) {
  Environment env;
  env.name = std::move(name);
  env.mdp = compile(maze);
  env.geometry = Geometry::grid(maze);
  env.maze = maze;
  env.horizon = maze.horizon;
  return env;
}

Environment make_environment(TabularMdp mdp, int horizon, std::string name) {
  mdp.validate();
  if (horizon <= 0) throw std::invalid_argument("make_environment: horizon must be positive");
  Environment env;
  env.name = std::move(name);
  env.geometry = Geometry::graph(mdp);
  env.mdp = std::move(mdp);
  env.horizon = horizon;
  return env;
}

GridMaze open_maze_10() {
  GridMaze params;
  params.slip_prob = 0.0;
  params.horizon = 100;
  return parse_maze(kOpenLayout, params);
}

GridMaze partial_maze_10() {
  GridMaze params;
  params.slip_prob = 0.1;
  params.horizon = 100;
  return parse_maze(kPartialLayout, params);
}

Environment parse_environment(const std::string& spec) {
  if (spec == "stitching") return make_environment(stitching_maze(), "stitching");
  if (spec == "open10") return make_environment(open_maze_10(), "open10");
  if (spec == "partial10") return make_environment(partial_maze_10(), "partial10");
  if (spec.rfind("maze:", 0) == 0) {
    auto parts = split(spec.substr(5), ',');
    GridMaze params;
    for (std::size_t i = 1; i < parts.size(); ++i) {
      if (parts[i].rfind("slip=", 0) != 0) throw std::invalid_argument("unknown maze option '" + parts[i] + "'");
      params.slip_prob = std::stod(parts[i].substr(5));
    }
    return make_environment(load_maze(parts[0], params), spec);
  }
  if (spec.rfind("random:", 0) == 0) {
    const auto parts = split(spec.substr(7), ',');
    if (parts.size() != 4) throw std::invalid_argument("random environment spec is random:<S>,<A>,<B>,<seed>");
    const auto mdp = build_random_mdp(std::stoi(parts[0]), std::stoi(parts[1]), std::stoi(parts[2]), 1.0, 0.9,
                                      std::stoull(parts[3]));
    return make_environment(mdp, 50, spec);
  }
  throw std::invalid_argument("unknown environment '" + spec +
                              "' (expected stitching, open10, partial10, maze:<path>, random:<S>,<A>,<B>,<seed>)");
}

}  // namespace odaf
