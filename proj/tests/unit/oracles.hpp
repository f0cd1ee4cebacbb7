#pragma once

// Independent reference computations used by the unit tests. Nothing here
// calls into the library's solvers.

#include <cmath>
#include <cstdint>
#include <deque>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "odaf/mdp.hpp"

namespace oracle {

/// Q* by in-place (Gauss-Seidel) value iteration on the dense tensor.
inline std::vector<double> q_star(const odaf::TabularMdp& m, double tol = 1e-13) {
  const int S = m.num_states;
  const int A = m.num_actions;
  std::vector<double> v(static_cast<std::size_t>(S), 0.0);
  std::vector<double> q(static_cast<std::size_t>(S * A), 0.0);
  for (int sweep = 0; sweep < 1000000; ++sweep) {
    double delta = 0.0;
    for (int s = 0; s < S; ++s) {
      double best = -INFINITY;
      for (int a = 0; a < A; ++a) {
        double total = m.reward[static_cast<std::size_t>(s * A + a)];
        for (int sp = 0; sp < S; ++sp) {
          total += m.discount * m.transition[static_cast<std::size_t>((s * A + a) * S + sp)] * v[static_cast<std::size_t>(sp)];
        }
        q[static_cast<std::size_t>(s * A + a)] = total;
        best = std::max(best, total);
      }
      delta = std::max(delta, std::abs(best - v[static_cast<std::size_t>(s)]));
      v[static_cast<std::size_t>(s)] = best;
    }
    if (delta < tol) return q;
  }
  throw std::runtime_error("oracle value iteration did not converge");
}

inline std::vector<double> v_from_q(const std::vector<double>& q, int S, int A) {
  std::vector<double> v(static_cast<std::size_t>(S), -INFINITY);
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) v[static_cast<std::size_t>(s)] = std::max(v[static_cast<std::size_t>(s)], q[static_cast<std::size_t>(s * A + a)]);
  }
  return v;
}

/// States reachable from the support of the initial distribution.
inline std::vector<bool> reachable(const odaf::TabularMdp& m) {
  std::vector<bool> seen(static_cast<std::size_t>(m.num_states), false);
  std::deque<int> queue;
  for (int s = 0; s < m.num_states; ++s) {
    if (m.initial_dist[static_cast<std::size_t>(s)] > 0.0) {
      seen[static_cast<std::size_t>(s)] = true;
      queue.push_back(s);
    }
  }
  while (!queue.empty()) {
    const int s = queue.front();
    queue.pop_front();
    for (int a = 0; a < m.num_actions; ++a) {
      for (int sp = 0; sp < m.num_states; ++sp) {
        if (m.p(s, a, sp) > 0.0 && !seen[static_cast<std::size_t>(sp)]) {
          seen[static_cast<std::size_t>(sp)] = true;
          queue.push_back(sp);
        }
      }
    }
  }
  return seen;
}

/// Solves A x = b by Gaussian elimination with partial pivoting (A row-major n x n).
inline std::vector<double> solve_linear(std::vector<double> a, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t pivot = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r * n + c]) > std::abs(a[pivot * n + c])) pivot = r;
    }
    for (std::size_t k = 0; k < n; ++k) std::swap(a[c * n + k], a[pivot * n + k]);
    std::swap(b[c], b[pivot]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r * n + c] / a[c * n + c];
      for (std::size_t k = c; k < n; ++k) a[r * n + k] -= f * a[c * n + k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double total = b[i];
    for (std::size_t k = i + 1; k < n; ++k) total -= a[i * n + k] * x[k];
    x[i] = total / a[i * n + i];
  }
  return x;
}

/// Undiscounted return of replaying `actions` from `start` on a deterministic maze.
inline double script_return(const odaf::GridMaze& maze, odaf::Cell start, std::span<const int> actions) {
  double total = 0.0;
  odaf::Cell at = start;
  for (int a : actions) {
    at = maze.apply(at, static_cast<odaf::Move>(a));
    total += maze.step_reward + (at == maze.goal ? maze.goal_reward : 0.0);
    if (at == maze.goal) break;
  }
  return total;
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace oracle
