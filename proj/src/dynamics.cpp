#include "odaf/dynamics.hpp"

#include <algorithm>
#include <deque>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>

#include "odaf/errors.hpp"

namespace odaf {

Geometry Geometry::grid(const GridMaze& maze) {
  Geometry g;
  g.is_grid_ = true;
  g.num_states_ = maze.num_cells();
  g.width_ = maze.width;
  g.height_ = maze.height;
  g.walls_ = maze.walls;
  return g;
}

Geometry Geometry::graph(const TabularMdp& mdp) {
  Geometry g;
  g.num_states_ = mdp.num_states;
  g.adjacency_.resize(static_cast<std::size_t>(mdp.num_states));
  for (int s = 0; s < mdp.num_states; ++s) {
    auto& out = g.adjacency_[static_cast<std::size_t>(s)];
    for (int sp = 0; sp < mdp.num_states; ++sp) {
      if (sp == s) continue;
      for (int a = 0; a < mdp.num_actions; ++a) {
        if (mdp.p(s, a, sp) > 0.0) {
          out.push_back(sp);
          break;
        }
      }
    }
  }
  return g;
}

std::vector<int> Geometry::neighborhood(int state, int radius) const {
  if (radius < 0) throw std::invalid_argument("neighborhood: radius must be non-negative");
  if (state < 0 || state >= num_states_) throw std::invalid_argument("neighborhood: state out of range");
  std::vector<int> out;
  if (is_grid_) {
    const int row = state / width_;
    const int col = state % width_;
    for (int r = std::max(0, row - radius); r <= std::min(height_ - 1, row + radius); ++r) {
      for (int c = std::max(0, col - radius); c <= std::min(width_ - 1, col + radius); ++c) {
        const int s = r * width_ + c;
        if (s == state || !walls_[static_cast<std::size_t>(s)]) out.push_back(s);
      }
    }
    return out;
  }
  std::vector<int> depth(static_cast<std::size_t>(num_states_), -1);
  std::deque<int> frontier{state};
  depth[static_cast<std::size_t>(state)] = 0;
  while (!frontier.empty()) {
    const int s = frontier.front();
    frontier.pop_front();
    out.push_back(s);
    if (depth[static_cast<std::size_t>(s)] == radius) continue;
    for (int sp : adjacency_[static_cast<std::size_t>(s)]) {
      if (depth[static_cast<std::size_t>(sp)] >= 0) continue;
      depth[static_cast<std::size_t>(sp)] = depth[static_cast<std::size_t>(s)] + 1;
      frontier.push_back(sp);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> perturb_neighborhood(const Geometry& geometry, int state, int radius) {
  return geometry.neighborhood(state, radius);
}

EmpiricalDynamics EmpiricalDynamics::fit(const TransitionDataset& dataset, const DynamicsOptions& options) {
  if (!(options.smoothing >= 0.0)) throw std::invalid_argument("fit_empirical: smoothing must be non-negative");
  if (options.min_count < 1) throw std::invalid_argument("fit_empirical: min_count must be at least 1");
  const int S = dataset.num_states();
  const int A = dataset.num_actions();
  if (options.outcome_geometry && options.outcome_geometry->num_states() != S) {
    throw std::invalid_argument("fit_empirical: geometry does not match the dataset's state count");
  }

  EmpiricalDynamics dyn;
  dyn.num_states_ = S;
  dyn.num_actions_ = A;
  dyn.smoothing_ = options.smoothing;
  const auto pairs = static_cast<std::size_t>(S) * static_cast<std::size_t>(A);
  dyn.rows_.assign(pairs, {});
  dyn.kinds_.assign(pairs, RowKind::fallback);
  dyn.rewards_.assign(pairs, 0.0);
  dyn.state_support_.assign(static_cast<std::size_t>(S), false);
  for (int s : dataset.state_support()) {
    dyn.state_support_[static_cast<std::size_t>(s)] = true;
    dyn.support_list_.push_back(s);
  }

  const std::vector<int> candidates = dataset.observed_next_states();
  std::vector<double> reward_sum(pairs, 0.0);
  std::vector<double> enter_sum(static_cast<std::size_t>(S), 0.0);
  std::vector<int> enter_count(static_cast<std::size_t>(S), 0);
  double total_reward = 0.0;
  double nonterminal_reward = 0.0;
  int nonterminal_count = 0;
  for (const auto& t : dataset.transitions()) {
    reward_sum[dyn.pair(t.state, t.action)] += t.reward;
    total_reward += t.reward;
    // rewards are per (s,a), so a stay-in-place sample says nothing about entering s
    if (t.state == t.next_state) continue;
    enter_sum[static_cast<std::size_t>(t.next_state)] += t.reward;
    ++enter_count[static_cast<std::size_t>(t.next_state)];
    if (!t.done) {
      nonterminal_reward += t.reward;
      ++nonterminal_count;
    }
  }
  const double mean_reward = dataset.empty() ? 0.0 : total_reward / static_cast<double>(dataset.size());
  const double default_enter = nonterminal_count > 0 ? nonterminal_reward / nonterminal_count : mean_reward;

  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      const int n = dataset.count_sa(s, a);
      if (n < options.min_count) continue;
      const auto idx = dyn.pair(s, a);
      const auto& hist = dataset.next_counts(s, a);
      auto& row = dyn.rows_[idx];
      if (options.smoothing == 0.0) {
        for (const auto& [next, count] : hist) row.push_back({next, static_cast<double>(count) / n});
      } else {
        const double denom = n + options.smoothing * static_cast<double>(candidates.size());
        for (int next : candidates) {
          const auto it = hist.find(next);
          const double count = it == hist.end() ? 0.0 : it->second;
          row.push_back({next, (count + options.smoothing) / denom});
        }
      }
      dyn.kinds_[idx] = RowKind::observed;
      dyn.rewards_[idx] = reward_sum[idx] / n;
    }
  }

  // displacement model per action, pooled over every observed move
  std::vector<std::map<std::pair<int, int>, int>> displacement(static_cast<std::size_t>(A));
  if (options.outcome_geometry && options.outcome_geometry->is_grid()) {
    const int width = options.outcome_geometry->width();
    for (const auto& t : dataset.transitions()) {
      if (t.state == t.next_state) continue;
      const std::pair<int, int> d{t.next_state / width - t.state / width, t.next_state % width - t.state % width};
      ++displacement[static_cast<std::size_t>(t.action)][d];
    }
  }

  const auto enter_reward = [&](int s) {
    const auto i = static_cast<std::size_t>(s);
    return enter_count[i] > 0 ? enter_sum[i] / enter_count[i] : default_enter;
  };

  std::vector<bool> absorbing(static_cast<std::size_t>(S), false);
  for (int s : dataset.terminal_states()) absorbing[static_cast<std::size_t>(s)] = true;

  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      const auto idx = dyn.pair(s, a);
      if (dyn.kinds_[idx] == RowKind::observed) continue;
      if (options.outcome_geometry && absorbing[static_cast<std::size_t>(s)]) {
        // episodes end here, so the model keeps the agent in place at no reward
        dyn.rows_[idx].push_back({s, 1.0});
        dyn.kinds_[idx] = RowKind::predicted;
        continue;
      }
      const auto& disp = displacement[static_cast<std::size_t>(a)];
      if (!disp.empty()) {
        const auto& geo = *options.outcome_geometry;
        int total = 0;
        for (const auto& [d, count] : disp) total += count;
        std::map<int, double> merged;
        const int row = s / geo.width();
        const int col = s % geo.width();
        for (const auto& [d, count] : disp) {
          const int r2 = row + d.first;
          const int c2 = col + d.second;
          const bool inside = r2 >= 0 && r2 < geo.height() && c2 >= 0 && c2 < geo.width();
          merged[inside ? r2 * geo.width() + c2 : s] += static_cast<double>(count) / total;
        }
        double expected_reward = 0.0;
        for (const auto& [next, p] : merged) {
          dyn.rows_[idx].push_back({next, p});
          expected_reward += p * enter_reward(next);
        }
        dyn.kinds_[idx] = RowKind::predicted;
        dyn.rewards_[idx] = expected_reward;
      } else {
        auto& row = dyn.rows_[idx];
        row.reserve(static_cast<std::size_t>(S));
        for (int sp = 0; sp < S; ++sp) row.push_back({sp, 1.0 / S});
        dyn.kinds_[idx] = RowKind::fallback;
        dyn.rewards_[idx] = mean_reward;
      }
    }
  }
  return dyn;
}

EmpiricalDynamics fit_empirical(const TransitionDataset& dataset, double smoothing) {
  DynamicsOptions options;
  options.smoothing = smoothing;
  return EmpiricalDynamics::fit(dataset, options);
}

double EmpiricalDynamics::row_ood_mass(int state, int action) const {
  double mass = 0.0;
  for (const auto& o : row(state, action)) {
    if (!in_state_support(o.state)) mass += o.prob;
  }
  return mass;
}

std::vector<double> EmpiricalDynamics::dense_row(int state, int action) const {
  std::vector<double> out(static_cast<std::size_t>(num_states_), 0.0);
  for (const auto& o : row(state, action)) out[static_cast<std::size_t>(o.state)] += o.prob;
  return out;
}

namespace {

void require_support(const EmpiricalDynamics& dyn, int state) {
  if (state < 0 || state >= dyn.num_states()) throw std::invalid_argument("state index out of range");
  if (!dyn.in_state_support(state)) {
    throw SupportError("state " + std::to_string(state) + " is outside the dataset support", state);
  }
}

}  // namespace

TransitionedDist transitioned_dist(const EmpiricalDynamics& dyn, int state, std::span<const double> action_probs) {
  require_support(dyn, state);
  if (action_probs.size() != static_cast<std::size_t>(dyn.num_actions())) {
    throw std::invalid_argument("transitioned_dist: action distribution has wrong size");
  }
  TransitionedDist out;
  out.probs.assign(static_cast<std::size_t>(dyn.num_states()), 0.0);
  out.via_fallback.assign(static_cast<std::size_t>(dyn.num_states()), false);
  for (int a = 0; a < dyn.num_actions(); ++a) {
    const double w = action_probs[static_cast<std::size_t>(a)];
    if (w == 0.0) continue;
    const bool fallback = dyn.is_fallback(state, a);
    for (const auto& o : dyn.row(state, a)) {
      out.probs[static_cast<std::size_t>(o.state)] += w * o.prob;
      if (fallback) out.via_fallback[static_cast<std::size_t>(o.state)] = true;
    }
  }
  return out;
}

TransitionedDist transitioned_dist(const EmpiricalDynamics& dyn, int state, const SoftmaxPolicy& policy) {
  return transitioned_dist(dyn, state, policy.probs(state));
}

double ood_mass(const EmpiricalDynamics& dyn, int state, std::span<const double> action_probs) {
  require_support(dyn, state);
  double mass = 0.0;
  for (int a = 0; a < dyn.num_actions(); ++a) {
    mass += action_probs[static_cast<std::size_t>(a)] * dyn.row_ood_mass(state, a);
  }
  return mass;
}

double ood_mass(const EmpiricalDynamics& dyn, int state, const SoftmaxPolicy& policy) {
  return ood_mass(dyn, state, policy.probs(state));
}

}  // namespace odaf
