#include "odaf/mdp.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace odaf {

namespace {

constexpr double kProbTolerance = 1e-12;

[[noreturn]] void fail(const std::string& what) { throw std::invalid_argument("TabularMdp: " + what); }

}  // namespace

void TabularMdp::validate() const {
  if (num_states <= 0 || num_actions <= 0) fail("dimensions must be positive");
  const auto s_count = static_cast<std::size_t>(num_states);
  const auto sa_count = s_count * static_cast<std::size_t>(num_actions);
  if (transition.size() != sa_count * s_count) fail("transition tensor has wrong size");
  if (reward.size() != sa_count) fail("reward table has wrong size");
  if (initial_dist.size() != s_count) fail("initial distribution has wrong size");
  if (terminal.size() != s_count) fail("terminal flags have wrong size");
  if (!(discount > 0.0 && discount < 1.0)) fail("discount must lie in (0,1)");

  for (int s = 0; s < num_states; ++s) {
    for (int a = 0; a < num_actions; ++a) {
      double total = 0.0;
      for (double p : row(s, a)) {
        if (!(p >= 0.0)) fail("negative or NaN transition probability at state " + std::to_string(s));
        total += p;
      }
      if (std::abs(total - 1.0) > kProbTolerance) {
        fail("row (" + std::to_string(s) + "," + std::to_string(a) + ") sums to " +
             std::to_string(total));
      }
      const double rv = r(s, a);
      if (!std::isfinite(rv) || std::abs(rv) > r_max + 1e-12) {
        fail("reward at (" + std::to_string(s) + "," + std::to_string(a) + ") exceeds r_max");
      }
      if (terminal[s]) {
        if (rv != 0.0) fail("terminal state " + std::to_string(s) + " has non-zero reward");
        if (p(s, a, s) != 1.0) fail("terminal state " + std::to_string(s) + " does not self-loop");
      }
    }
  }
  double init_total = 0.0;
  for (double p : initial_dist) {
    if (!(p >= 0.0)) fail("negative initial probability");
    init_total += p;
  }
  if (std::abs(init_total - 1.0) > kProbTolerance) fail("initial distribution does not sum to 1");
}

TabularMdp make_empty_mdp(int num_states, int num_actions, double discount) {
  if (num_states <= 0 || num_actions <= 0) {
    throw std::invalid_argument("make_empty_mdp: dimensions must be positive");
  }
  TabularMdp mdp;
  mdp.num_states = num_states;
  mdp.num_actions = num_actions;
  mdp.discount = discount;
  const auto s_count = static_cast<std::size_t>(num_states);
  const auto sa_count = s_count * static_cast<std::size_t>(num_actions);
  mdp.transition.assign(sa_count * s_count, 0.0);
  mdp.reward.assign(sa_count, 0.0);
  mdp.initial_dist.assign(s_count, 0.0);
  mdp.terminal.assign(s_count, false);
  return mdp;
}

TabularMdp build_random_mdp(int num_states, int num_actions, int branching, double r_max,
                            double discount, std::uint64_t seed) {
  if (num_states < 1 || num_actions < 1) throw std::invalid_argument("build_random_mdp: empty state or action set");
  if (branching < 1 || branching > num_states) {
    throw std::invalid_argument("build_random_mdp: branching must lie in [1, num_states]");
  }
  if (!(discount > 0.0 && discount < 1.0)) throw std::invalid_argument("build_random_mdp: discount must lie in (0,1)");
  if (!(r_max >= 0.0)) throw std::invalid_argument("build_random_mdp: r_max must be non-negative");

  TabularMdp mdp = make_empty_mdp(num_states, num_actions, discount);
  mdp.r_max = r_max;
  Rng rng(seed);
  std::vector<int> order(static_cast<std::size_t>(num_states));
  std::vector<double> weights(static_cast<std::size_t>(branching));

  for (int s = 0; s < num_states; ++s) {
    for (int a = 0; a < num_actions; ++a) {
      // partial Fisher-Yates picks the reachable set
      std::iota(order.begin(), order.end(), 0);
      for (int i = 0; i < branching; ++i) {
        const auto j = static_cast<std::size_t>(i) + rng.index(static_cast<std::size_t>(num_states - i));
        std::swap(order[static_cast<std::size_t>(i)], order[j]);
      }
      double total = 0.0;
      for (auto& w : weights) {
        w = 1.0 - rng.uniform();  // (0, 1]
        total += w;
      }
      auto row = mdp.row(s, a);
      for (int i = 0; i < branching; ++i) {
        row[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = weights[static_cast<std::size_t>(i)] / total;
      }
      // push the rounding residue onto the largest entry so the row sums to 1
      double sum = 0.0;
      std::size_t largest = 0;
      for (std::size_t k = 0; k < row.size(); ++k) {
        sum += row[k];
        if (row[k] > row[largest]) largest = k;
      }
      row[largest] += 1.0 - sum;
      mdp.r(s, a) = rng.uniform(-r_max, r_max);
    }
  }
  for (auto& p : mdp.initial_dist) p = 1.0 / num_states;
  return mdp;
}

StepResult step(const TabularMdp& mdp, int state, int action, Rng& rng) {
  if (state < 0 || state >= mdp.num_states) throw std::invalid_argument("step: state out of range");
  if (action < 0 || action >= mdp.num_actions) throw std::invalid_argument("step: action out of range");
  if (mdp.terminal[state]) return {state, 0.0, true};
  const int next = rng.categorical(mdp.row(state, action));
  return {next, mdp.r(state, action), static_cast<bool>(mdp.terminal[next])};
}

int sample_initial_state(const TabularMdp& mdp, Rng& rng) { return rng.categorical(mdp.initial_dist); }

}  // namespace odaf
