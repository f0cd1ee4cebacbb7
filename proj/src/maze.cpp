#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "odaf/errors.hpp"
#include "odaf/mdp.hpp"

namespace odaf {

namespace {

constexpr std::string_view kStitchingLayout =
    "A.....B\n"
    ".#####.\n"
    ".#####.\n"
    "S....MG\n"
    "#####.#\n"
    "#####.#\n"
    "#####.#\n";

Move lateral_a(Move m) { return (m == Move::up || m == Move::down) ? Move::left : Move::up; }
Move lateral_b(Move m) { return (m == Move::up || m == Move::down) ? Move::right : Move::down; }

}  // namespace

std::string_view move_name(int action) {
  switch (action) {
    case 0: return "up";
    case 1: return "down";
    case 2: return "left";
    case 3: return "right";
    default: return "?";
  }
}

Cell GridMaze::apply(Cell from, Move move) const {
  Cell to = from;
  switch (move) {
    case Move::up: --to.row; break;
    case Move::down: ++to.row; break;
    case Move::left: --to.col; break;
    case Move::right: ++to.col; break;
  }
  return is_open(to) ? to : from;
}

void GridMaze::validate() const {
  if (width <= 0 || height <= 0) throw std::invalid_argument("GridMaze: dimensions must be positive");
  if (walls.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw std::invalid_argument("GridMaze: wall mask has wrong size");
  }
  if (!is_open(start)) throw std::invalid_argument("GridMaze: start is outside the grid or a wall");
  if (!is_open(goal)) throw std::invalid_argument("GridMaze: goal is outside the grid or a wall");
  if (start == goal) throw std::invalid_argument("GridMaze: start and goal coincide");
  if (!(slip_prob >= 0.0 && slip_prob < 1.0)) throw std::invalid_argument("GridMaze: slip_prob must lie in [0,1)");
  if (horizon <= 0) throw std::invalid_argument("GridMaze: horizon must be positive");
  if (!(discount > 0.0 && discount < 1.0)) throw std::invalid_argument("GridMaze: discount must lie in (0,1)");
}

std::string GridMaze::to_text() const {
  std::string out;
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) {
      const Cell cell{r, c};
      if (cell == start) out += 'S';
      else if (cell == goal) out += 'G';
      else out += is_wall(cell) ? '#' : '.';
    }
    out += '\n';
  }
  return out;
}

GridMaze parse_maze(std::string_view text, const GridMaze& params) {
  std::vector<std::string> rows;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    rows.push_back(line);
  }
  while (!rows.empty() && rows.back().empty()) rows.pop_back();
  if (rows.empty()) throw ParseError("maze text is empty", 0);

  GridMaze maze = params;
  maze.height = static_cast<int>(rows.size());
  maze.width = static_cast<int>(rows.front().size());
  maze.walls.assign(static_cast<std::size_t>(maze.width * maze.height), false);
  bool saw_start = false;
  bool saw_goal = false;
  for (int r = 0; r < maze.height; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    const auto line_no = static_cast<std::size_t>(r + 1);
    if (static_cast<int>(row.size()) != maze.width) throw ParseError("ragged maze row", line_no);
    for (int c = 0; c < maze.width; ++c) {
      const Cell cell{r, c};
      switch (row[static_cast<std::size_t>(c)]) {
        case '#': maze.walls[static_cast<std::size_t>(maze.index(cell))] = true; break;
        case '.': break;
        case 'S':
          if (saw_start) throw ParseError("second start cell", line_no);
          maze.start = cell;
          saw_start = true;
          break;
        case 'G':
          if (saw_goal) throw ParseError("second goal cell", line_no);
          maze.goal = cell;
          saw_goal = true;
          break;
        default: throw ParseError(std::string("unexpected character '") + row[static_cast<std::size_t>(c)] + "'", line_no);
      }
    }
  }
  if (!saw_start) throw ParseError("maze has no start cell 'S'", 0);
  if (!saw_goal) throw ParseError("maze has no goal cell 'G'", 0);
  maze.validate();
  return maze;
}

GridMaze load_maze(const std::filesystem::path& path, const GridMaze& params) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open maze file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_maze(buffer.str(), params);
}

GridMaze stitching_maze() {
  std::string layout(kStitchingLayout);
  for (char& ch : layout) {
    if (ch == 'A' || ch == 'B' || ch == 'M') ch = '.';
  }
  GridMaze params;
  params.slip_prob = 0.0;
  params.step_reward = -1.0;
  params.goal_reward = 50.0;
  params.horizon = 60;
  params.discount = 0.95;
  return parse_maze(layout, params);
}

StitchingLandmarks stitching_landmarks() {
  StitchingLandmarks marks;
  int r = 0;
  int c = 0;
  for (char ch : kStitchingLayout) {
    if (ch == '\n') {
      ++r;
      c = 0;
      continue;
    }
    const Cell cell{r, c};
    if (ch == 'S') marks.start = cell;
    if (ch == 'A') marks.a = cell;
    if (ch == 'B') marks.b = cell;
    if (ch == 'M') marks.m = cell;
    if (ch == 'G') marks.goal = cell;
    ++c;
  }
  return marks;
}

TabularMdp compile(const GridMaze& maze) {
  maze.validate();
  TabularMdp mdp = make_empty_mdp(maze.num_cells(), kNumMoves, maze.discount);
  mdp.r_max = std::abs(maze.step_reward) + std::abs(maze.goal_reward);
  const int goal = maze.index(maze.goal);

  for (int s = 0; s < maze.num_cells(); ++s) {
    if (maze.is_wall(s) || s == goal) {
      mdp.terminal[s] = true;
      for (int a = 0; a < kNumMoves; ++a) mdp.row(s, a)[static_cast<std::size_t>(s)] = 1.0;
      continue;
    }
    const Cell from = maze.cell(s);
    for (int a = 0; a < kNumMoves; ++a) {
      const auto move = static_cast<Move>(a);
      auto row = mdp.row(s, a);
      row[static_cast<std::size_t>(maze.index(maze.apply(from, move)))] += 1.0 - maze.slip_prob;
      if (maze.slip_prob > 0.0) {
        row[static_cast<std::size_t>(maze.index(maze.apply(from, lateral_a(move))))] += 0.5 * maze.slip_prob;
        row[static_cast<std::size_t>(maze.index(maze.apply(from, lateral_b(move))))] += 0.5 * maze.slip_prob;
      }
      double expected = 0.0;
      for (int sp = 0; sp < maze.num_cells(); ++sp) {
        const double p = row[static_cast<std::size_t>(sp)];
        if (p > 0.0) expected += p * (maze.step_reward + (sp == goal ? maze.goal_reward : 0.0));
      }
      mdp.r(s, a) = expected;
    }
  }
  mdp.initial_dist[static_cast<std::size_t>(maze.index(maze.start))] = 1.0;
  return mdp;
}

}  // namespace odaf
