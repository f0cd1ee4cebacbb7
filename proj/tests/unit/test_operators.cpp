#include <doctest.h>

#include <cmath>

#include "odaf/errors.hpp"
#include "odaf/operators.hpp"
#include "oracles.hpp"

using namespace odaf;

namespace {

/// Follows argmax over `allowed` actions on the deterministic maze from the start.
std::vector<int> trace_greedy(const GridMaze& maze, const QTable& q, const std::function<bool(int, int)>& allowed) {
  std::vector<int> path{maze.index(maze.start)};
  Cell at = maze.start;
  for (int t = 0; t < 30 && !(at == maze.goal); ++t) {
    const int s = maze.index(at);
    int best = -1;
    for (int a = 0; a < kNumMoves; ++a) {
      if (allowed(s, a) && (best < 0 || q(s, a) > q(s, best))) best = a;
    }
    REQUIRE(best >= 0);
    at = maze.apply(at, static_cast<Move>(best));
    path.push_back(maze.index(at));
  }
  return path;
}

TransitionDataset exhaustive_dataset(const TabularMdp& m) {
  std::vector<Transition> ts;
  for (int s = 0; s < m.num_states; ++s) {
    for (int a = 0; a < m.num_actions; ++a) {
      for (int sp = 0; sp < m.num_states; ++sp) {
        if (m.p(s, a, sp) > 0.0) ts.push_back({s, a, m.r(s, a), sp, false});
      }
    }
  }
  return TransitionDataset(m.num_states, m.num_actions, ts);
}

QTable random_table(int S, int A, Rng& rng) {
  QTable q(S, A);
  for (double& v : q.values) v = rng.uniform(-5.0, 5.0);
  return q;
}

}  // namespace

TEST_SUITE("operators") {
  TEST_CASE("vanishing discount returns the reward table") {
    auto m = build_random_mdp(6, 3, 2, 1.0, 0.9, 2);
    m.discount = 1e-12;
    const auto model = backup_model(m);
    Rng rng(1);
    const auto out = standard_backup(random_table(6, 3, rng), model);
    for (int s = 0; s < 6; ++s) {
      for (int a = 0; a < 3; ++a) CHECK(std::abs(out(s, a) - m.r(s, a)) <= 1e-10);
    }
  }

  TEST_CASE("single-state geometric series") {
    auto m = make_empty_mdp(1, 1, 0.5);
    m.row(0, 0)[0] = 1.0;
    m.r(0, 0) = 1.0;
    m.r_max = 1.0;
    m.initial_dist = {1.0};
    const auto model = backup_model(m);
    const auto fp = solve_fixed_point([&](const QTable& q) { return standard_backup(q, model); }, QTable(1, 1), 1e-13, 200);
    CHECK(fp.q(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
  }

  TEST_CASE("standard backup converges to the independent oracle") {
    const auto m = build_random_mdp(10, 3, 3, 1.0, 0.9, 11);
    const auto model = backup_model(m);
    const auto fp = solve_fixed_point([&](const QTable& q) { return standard_backup(q, model); }, QTable(10, 3), 1e-12, 2000);
    const auto reference = oracle::q_star(m);
    for (std::size_t i = 0; i < reference.size(); ++i) CHECK(fp.q.values[i] == doctest::Approx(reference[i]).epsilon(1e-9));
  }

  TEST_CASE("action support with full coverage equals the standard backup") {
    const auto m = build_random_mdp(7, 3, 2, 1.0, 0.9, 5);
    const auto dyn = fit_empirical(exhaustive_dataset(m), 0.0);
    const auto model = backup_model(m);
    Rng rng(2);
    for (int trial = 0; trial < 5; ++trial) {
      const auto q = random_table(7, 3, rng);
      CHECK(action_support_backup(q, model, dyn) == standard_backup(q, model));
      CHECK(outcome_driven_backup(q, model, admissible_actions(dyn)) == standard_backup(q, model));
      CHECK(outcome_driven_backup(q, model, all_actions(7, 3)) == standard_backup(q, model));
    }
  }

  TEST_CASE("omitting the shortcut action keeps the fixed point below Q*") {
    // state 1: action 1 pays 1 and ends at terminal 2; action 0 loops at 1 for nothing
    auto m = make_empty_mdp(3, 2, 0.9);
    m.row(0, 0)[1] = 1.0;
    m.row(0, 1)[0] = 1.0;
    m.row(1, 0)[1] = 1.0;
    m.row(1, 1)[2] = 1.0;
    m.r(1, 1) = 1.0;
    for (int a = 0; a < 2; ++a) m.row(2, a)[2] = 1.0;
    m.terminal = {false, false, true};
    m.initial_dist = {1.0, 0.0, 0.0};
    m.r_max = 1.0;
    m.validate();

    const TransitionDataset d(3, 2, {{0, 0, 0.0, 1, false}, {1, 0, 0.0, 1, false}, {0, 1, 0.0, 0, false}});
    const auto dyn = fit_empirical(d, 0.0);
    const auto model = backup_model(m);
    const auto fp = solve_fixed_point([&](const QTable& q) { return action_support_backup(q, model, dyn); },
                                      QTable(3, 2), 1e-13, 5000);
    const auto qstar = oracle_value_iteration(m);
    // by hand: V*(1) = 1, Q*(0,0) = 0.9
    CHECK(qstar(0, 0) == doctest::Approx(0.9));
    CHECK(fp.q(0, 0) == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(fp.q(0, 0) < qstar(0, 0) - 0.5);
  }

  TEST_CASE("stitching: action support follows the detour, outcome-driven takes M to G") {
    const auto maze = stitching_maze();
    const auto marks = stitching_landmarks();
    const auto d = make_stitching_dataset(maze, 10, 0);

    const auto counted = fit_empirical(d, 0.0);
    const auto counted_model = backup_model(counted, maze.discount);
    const auto as = solve_fixed_point([&](const QTable& q) { return action_support_backup(q, counted_model, counted); },
                                      QTable(49, 4), 1e-10, 5000);
    const auto as_path = trace_greedy(maze, as.q, [&](int s, int a) { return counted.pair_supported(s, a); });
    CHECK(as_path.size() == 13);
    CHECK(std::find(as_path.begin(), as_path.end(), maze.index(marks.b)) != as_path.end());

    DynamicsOptions options;
    options.outcome_geometry = Geometry::grid(maze);
    const auto dyn = EmpiricalDynamics::fit(d, options);
    const auto admissible = admissible_actions(dyn);
    const int m_state = maze.index(marks.m);
    const auto& at_m = admissible.actions[static_cast<std::size_t>(m_state)];
    CHECK(std::find(at_m.begin(), at_m.end(), static_cast<int>(Move::right)) != at_m.end());

    const auto model = backup_model(dyn, maze.discount);
    const auto od = solve_fixed_point([&](const QTable& q) { return outcome_driven_backup(q, model, admissible); },
                                      QTable(49, 4), 1e-10, 5000);
    const auto od_path = trace_greedy(maze, od.q, [&](int s, int a) {
      const auto& c = admissible.candidates[static_cast<std::size_t>(s)];
      return std::find(c.begin(), c.end(), a) != c.end();
    });
    CHECK(od_path.size() == 7);
    CHECK(od_path[5] == m_state);
    CHECK(od_path.back() == maze.index(maze.goal));
  }

  TEST_CASE("singleton admissible sets evaluate that policy") {
    const auto m = build_random_mdp(6, 3, 2, 1.0, 0.9, 8);
    const std::vector<int> pi{0, 2, 1, 1, 0, 2};
    AdmissibleActionSets sets;
    for (int s = 0; s < 6; ++s) {
      sets.actions.push_back({pi[static_cast<std::size_t>(s)]});
      sets.candidates.push_back({pi[static_cast<std::size_t>(s)]});
      sets.fallback.push_back(pi[static_cast<std::size_t>(s)]);
    }
    const auto model = backup_model(m);
    const auto fp = solve_fixed_point([&](const QTable& q) { return outcome_driven_backup(q, model, sets); }, QTable(6, 3),
                                      1e-13, 5000);
    // V = (I - gamma P_pi)^-1 r_pi
    std::vector<double> a(36, 0.0);
    std::vector<double> b(6);
    for (int s = 0; s < 6; ++s) {
      const int act = pi[static_cast<std::size_t>(s)];
      a[static_cast<std::size_t>(s * 6 + s)] += 1.0;
      for (int sp = 0; sp < 6; ++sp) a[static_cast<std::size_t>(s * 6 + sp)] -= 0.9 * m.p(s, act, sp);
      b[static_cast<std::size_t>(s)] = m.r(s, act);
    }
    const auto v = oracle::solve_linear(a, b);
    const auto lib = evaluate_deterministic_policy(m, pi);
    for (int s = 0; s < 6; ++s) {
      CHECK(fp.q(s, pi[static_cast<std::size_t>(s)]) == doctest::Approx(v[static_cast<std::size_t>(s)]).epsilon(1e-10));
      CHECK(lib[static_cast<std::size_t>(s)] == doctest::Approx(v[static_cast<std::size_t>(s)]).epsilon(1e-10));
    }
  }

  TEST_CASE("fixed-point iteration bookkeeping") {
    const auto m = build_random_mdp(20, 4, 3, 1.0, 0.9, 21);
    const auto model = backup_model(m);
    const Backup backup = [&](const QTable& q) { return standard_backup(q, model); };
    const auto fp = solve_fixed_point(backup, QTable(20, 4), 1e-10, 5000);
    // below ~1e-6 the deltas are dominated by rounding of O(1) values, so the ratio is not measurable
    for (std::size_t i = 1; i < fp.trace.size(); ++i) {
      if (fp.trace[i - 1] > 1e-6) CHECK(fp.trace[i] / fp.trace[i - 1] <= 0.9 + 1e-9);
    }
    const double bound = std::ceil(std::log(fp.trace.front() / 1e-10) / std::log(1.0 / 0.9)) + 2.0;
    CHECK(fp.iterations <= bound);

    const auto again = solve_fixed_point(backup, fp.q, 1e-10, 5000);
    CHECK(again.iterations == 1);
    CHECK(again.trace.front() < 1e-10);

    try {
      solve_fixed_point(backup, QTable(20, 4), 1e-10, 3);
      FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
      CHECK(e.trace().size() == 3);
    }
  }

  TEST_CASE("oracle value iteration by hand") {
    const auto zero = [] {
      auto m = build_random_mdp(5, 2, 2, 1.0, 0.9, 1);
      std::fill(m.reward.begin(), m.reward.end(), 0.0);
      return m;
    }();
    const auto q0 = oracle_value_iteration(zero);
    for (double v : q0.values) CHECK(v == 0.0);

    // 0 -> 1 for nothing, 1 -> 1 paying 1, gamma 0.5
    auto chain = make_empty_mdp(2, 1, 0.5);
    chain.row(0, 0)[1] = 1.0;
    chain.row(1, 0)[1] = 1.0;
    chain.r(1, 0) = 1.0;
    chain.r_max = 1.0;
    chain.initial_dist = {1.0, 0.0};
    const auto q = oracle_value_iteration(chain);
    CHECK(q.max_value(1) == doctest::Approx(2.0).epsilon(1e-11));
    CHECK(q.max_value(0) == doctest::Approx(1.0).epsilon(1e-11));
  }

  TEST_CASE("oracle greedy path through the stitching maze is S, M, G") {
    const auto maze = stitching_maze();
    const auto marks = stitching_landmarks();
    const auto q = oracle_value_iteration(compile(maze));
    const auto path = trace_greedy(maze, q, [](int, int) { return true; });
    REQUIRE(path.size() == 7);
    CHECK(path[5] == maze.index(marks.m));
    CHECK(path[6] == maze.index(maze.goal));
    for (int i = 0; i < 6; ++i) CHECK(maze.cell(path[static_cast<std::size_t>(i)]).row == maze.start.row);
  }

  TEST_CASE("all three backups are contractions") {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto m = build_random_mdp(12, 4, 3, 1.0, 0.9, seed);
      const auto d = rollout(m, SoftmaxPolicy(12, 4), 4, 6, seed);
      const auto dyn = fit_empirical(d, 0.0);
      const auto model = backup_model(dyn, 0.9);
      const auto admissible = admissible_actions(dyn);
      const std::vector<Backup> backups{
          [&](const QTable& q) { return standard_backup(q, model); },
          [&](const QTable& q) { return action_support_backup(q, model, dyn); },
          [&](const QTable& q) { return outcome_driven_backup(q, model, admissible); }};
      for (const auto& b : backups) {
        const auto report = verify_contraction(b, 12, 4, 0.9, 200, seed);
        CHECK(report.pass);
        CHECK(report.max_ratio <= 0.9 + 1e-9);
        CHECK_FALSE(report.counterexample.has_value());
      }
    }
  }

  TEST_CASE("dropping the discount breaks the contraction check") {
    const auto m = build_random_mdp(10, 3, 2, 1.0, 0.9, 4);
    const auto model = backup_model(m);
    const Backup buggy = [&](const QTable& q) {
      QTable out(q.num_states, q.num_actions);
      for (int s = 0; s < q.num_states; ++s) {
        for (int a = 0; a < q.num_actions; ++a) {
          double total = model.r(s, a);
          for (const auto& o : model.row(s, a)) total += o.prob * q.max_value(o.state);
          out(s, a) = total;
        }
      }
      return out;
    };
    const auto report = verify_contraction(buggy, 10, 3, 0.9, 200, 1);
    CHECK_FALSE(report.pass);
    CHECK(report.max_ratio > 0.9);
    CHECK(report.counterexample.has_value());
    CHECK(to_json(report)["pass"] == false);
  }

  TEST_CASE("geometric envelope of the outcome-driven iteration") {
    CHECK(std::pow(0.9, 20) == doctest::Approx(0.1216).epsilon(1e-3));
    const auto m = build_random_mdp(10, 3, 3, 1.0, 0.9, 6);
    const auto dyn = fit_empirical(rollout(m, SoftmaxPolicy(10, 3), 30, 20, 2), 0.0);
    Rng rng(5);
    const auto report = verify_theorem2_rate(dyn, 0.9, random_table(10, 3, rng), 20);
    CHECK(report.pass);
    REQUIRE(report.errors.size() == 21);
    CHECK(report.errors[0] == doctest::Approx(report.initial_error));
    CHECK(report.errors[20] <= std::pow(0.9, 20) * report.initial_error + 1e-9);
    CHECK(report.max_delta_ratio <= 0.9 + 1e-9);
    CHECK(report.slope <= std::log(0.9) + 0.01);
  }

  TEST_CASE("exhaustive coverage recovers Q*") {
    const auto m = build_random_mdp(8, 3, 1, 1.0, 0.9, 13);
    const auto dyn = fit_empirical(exhaustive_dataset(m), 0.0);
    const auto report = verify_corollary1(m, dyn);
    CHECK(report.pass);
    CHECK(report.disagreeing_states.empty());
    CHECK(report.max_q_gap <= 1e-3);
  }

  TEST_CASE("single-state MDP agrees trivially") {
    auto m = make_empty_mdp(1, 2, 0.9);
    m.row(0, 0)[0] = 1.0;
    m.row(0, 1)[0] = 1.0;
    m.r(0, 0) = 0.5;
    m.r_max = 1.0;
    m.initial_dist = {1.0};
    const auto dyn = fit_empirical(exhaustive_dataset(m), 0.0);
    CHECK(verify_corollary1(m, dyn).pass);
  }
}
