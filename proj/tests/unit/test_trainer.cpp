#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "odaf/errors.hpp"
#include "odaf/evaluation.hpp"
#include "odaf/operators.hpp"
#include "odaf/trainer.hpp"

using namespace odaf;

namespace {

SoftmaxPolicy with_probs(std::vector<std::vector<double>> rows) {
  std::vector<double> logits;
  for (const auto& r : rows) {
    for (double p : r) logits.push_back(std::log(p));
  }
  return SoftmaxPolicy(static_cast<int>(rows.size()), static_cast<int>(rows.front().size()), logits);
}

/// Every non-terminal (cell, move) of a deterministic maze, once.
TransitionDataset full_coverage(const GridMaze& maze) {
  std::vector<Transition> ts;
  for (int s = 0; s < maze.num_cells(); ++s) {
    const Cell c = maze.cell(s);
    if (maze.is_wall(c) || c == maze.goal) continue;
    for (int a = 0; a < kNumMoves; ++a) {
      const Cell n = maze.apply(c, static_cast<Move>(a));
      const bool goal = n == maze.goal;
      ts.push_back({s, a, maze.step_reward + (goal ? maze.goal_reward : 0.0), maze.index(n), goal});
    }
  }
  return TransitionDataset(maze.num_cells(), kNumMoves, ts);
}

TrainConfig quick_config(Regularizer reg, std::uint64_t seed) {
  TrainConfig c;
  c.iterations = 3000;
  c.eval_every = 1000;
  c.regularizer = reg;
  c.seed = seed;
  return c;
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("odaf penalty by hand: one risky successor at 0.4") {
    // from state 0 the only action reaches 1 w.p. 0.4 and 2 w.p. 0.6; U is 2 at state 1 and 0 at state 2
    const TransitionDataset d(3, 1,
                              {{0, 0, 0.0, 1, false}, {0, 0, 0.0, 1, false}, {0, 0, 0.0, 2, false},
                               {0, 0, 0.0, 2, false}, {0, 0, 0.0, 2, false}});
    const auto dyn = fit_empirical(d, 0.0);
    QEnsemble e(3, 1, [] {
      EnsembleParams p;
      p.k = 2;
      p.init_spread = 0.0;
      return p;
    }(), 0);
    e.member(0, 1, 0) = 0.0;
    e.member(1, 1, 0) = 4.0;
    auto m = make_empty_mdp(3, 1, 0.9);
    for (int s = 0; s < 3; ++s) m.row(s, 0)[static_cast<std::size_t>(s)] = 1.0;
    m.initial_dist = {1.0, 0.0, 0.0};
    const auto geo = Geometry::graph(m);
    const SoftmaxPolicy pi(3, 1);
    CHECK(odaf_penalty(pi, pi, dyn, e, geo, 0, 0, 100.0) == doctest::Approx(0.8));
    CHECK(validation_score(dyn, e, pi, 0, 0, 100.0) == doctest::Approx(0.8));

    const QEnsemble flat(3, 1, [] {
      EnsembleParams p;
      p.k = 2;
      p.init_spread = 0.0;
      return p;
    }(), 0);
    CHECK(odaf_penalty(pi, pi, dyn, flat, geo, 0, 0, 100.0) == 0.0);
    CHECK(validation_score(dyn, flat, pi, 0, 0, 100.0) == 0.0);
  }

  TEST_CASE("radius 0 with a deterministic successor collapses to U of that successor") {
    const TransitionDataset d(2, 2, {{0, 1, 0.0, 1, false}, {0, 0, 0.0, 0, false}});
    const auto dyn = fit_empirical(d, 0.0);
    EnsembleParams p;
    p.k = 2;
    p.init_spread = 0.0;
    QEnsemble e(2, 2, p, 0);
    e.member(0, 1, 0) = -1.5;
    e.member(1, 1, 0) = 1.5;
    e.member(0, 1, 1) = -1.5;
    e.member(1, 1, 1) = 1.5;
    auto m = make_empty_mdp(2, 2, 0.9);
    for (int s = 0; s < 2; ++s) {
      for (int a = 0; a < 2; ++a) m.row(s, a)[static_cast<std::size_t>(a)] = 1.0;
    }
    m.initial_dist = {1.0, 0.0};
    const auto geo = Geometry::graph(m);
    const auto pi = SoftmaxPolicy::near_deterministic(2, std::vector<int>{1, 0});
    CHECK(odaf_penalty(pi, pi, dyn, e, geo, 0, 0, 100.0) == doctest::Approx(1.5));
    CHECK(validation_score(dyn, e, pi, 0, 1, 100.0) == doctest::Approx(1.5));
    // a fallback row scores the ceiling
    CHECK(validation_score(dyn, e, pi, 1, 0, 100.0) == 100.0);
  }

  TEST_CASE("action support penalty") {
    const TransitionDataset d(3, 2, {{0, 0, 0.0, 1, false}, {1, 0, 0.0, 2, false}, {1, 1, 0.0, 2, false}});
    const auto pi = with_probs({{0.7, 0.3}, {0.7, 0.3}, {0.5, 0.5}});
    CHECK(regularizer_action_support(pi, d, 0) == doctest::Approx(0.3));
    CHECK(regularizer_action_support(pi, d, 1) == 0.0);
    CHECK(regularizer_action_support(pi, d, 2) == doctest::Approx(1.0));
  }

  TEST_CASE("state recovery penalty is a total variation") {
    // the model knows action 1 reaches state 2; the data from state 0 only ever went to 1
    const TransitionDataset model_data(3, 2, {{0, 0, 0.0, 1, false}, {0, 1, 0.0, 2, false}});
    const TransitionDataset behavior(3, 2, {{0, 0, 0.0, 1, false}, {0, 0, 0.0, 1, false}});
    const auto dyn = fit_empirical(model_data, 0.0);
    CHECK(regularizer_state_recovery(with_probs({{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}}), dyn, behavior, 0) ==
          doctest::Approx(0.5));
    CHECK(regularizer_state_recovery(SoftmaxPolicy::near_deterministic(2, std::vector<int>{1, 0, 0}), dyn, behavior, 0) ==
          doctest::Approx(1.0));
    CHECK(regularizer_state_recovery(with_probs({{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}}), dyn, model_data, 0) ==
          doctest::Approx(0.0));
  }

  TEST_CASE("behavior clone cross-entropy") {
    const TransitionDataset one_hot(2, 2, {{0, 1, 0.0, 1, false}});
    const TransitionDataset even(2, 2, {{0, 0, 0.0, 1, false}, {0, 1, 0.0, 1, false}});
    CHECK(regularizer_behavior_clone(SoftmaxPolicy::near_deterministic(2, std::vector<int>{1, 1}), one_hot, 0) ==
          doctest::Approx(0.0));
    CHECK(regularizer_behavior_clone(SoftmaxPolicy(2, 2), even, 0) == doctest::Approx(std::log(2.0)));
    CHECK(regularizer_behavior_clone(SoftmaxPolicy::near_deterministic(2, std::vector<int>{0, 0}), one_hot, 0) ==
          doctest::Approx(-std::log(kCloneMinProb)));
  }

  TEST_CASE("bandit ascent picks the better arm") {
    SoftmaxPolicy pi(1, 2);
    const std::vector<double> q{1.0, 0.0};
    ActorContext ctx;
    ctx.min_target = q;
    ctx.regularizer = Regularizer::none;
    const std::vector<int> states{0};
    for (int i = 0; i < 2000; ++i) actor_step(pi, ctx, states, 0.5);
    CHECK(pi.prob(0, 0) > 0.99);
  }

  TEST_CASE("entropy dominance flattens the policy") {
    SoftmaxPolicy pi(1, 3, {2.0, -1.0, 0.5});
    const std::vector<double> q{0.3, 0.3, 0.3};
    ActorContext ctx;
    ctx.min_target = q;
    ctx.entropy_coef = 5.0;
    ctx.regularizer = Regularizer::none;
    const std::vector<int> states{0};
    for (int i = 0; i < 3000; ++i) actor_step(pi, ctx, states, 0.05);
    for (int a = 0; a < 3; ++a) CHECK(pi.prob(0, a) == doctest::Approx(1.0 / 3.0).epsilon(1e-4));
  }

  TEST_CASE("analytic gradients of the smooth penalties match finite differences") {
    const auto m = build_random_mdp(5, 3, 2, 1.0, 0.9, 3);
    const auto d = rollout(m, SoftmaxPolicy(5, 3), 6, 6, 3);
    const auto dyn = fit_empirical(d, 0.0);
    Rng rng(8);
    std::vector<double> q(15);
    for (double& v : q) v = rng.uniform(-2.0, 2.0);
    std::vector<double> logits(15);
    for (double& v : logits) v = rng.uniform(-1.0, 1.0);
    const std::vector<int> states = d.visited_states();
    for (auto reg : {Regularizer::none, Regularizer::action_support, Regularizer::state_recovery,
                     Regularizer::behavior_clone}) {
      CAPTURE(regularizer_name(reg));
      ActorContext ctx;
      ctx.dyn = &dyn;
      ctx.dataset = &d;
      ctx.min_target = q;
      ctx.entropy_coef = 0.2;
      ctx.beta_odaf = 0.3;
      ctx.baseline_scale = 4.0;
      ctx.regularizer = reg;
      SoftmaxPolicy pi(5, 3, logits);
      std::vector<double> grad(15);
      actor_loss(pi, ctx, states, grad);
      const double h = 1e-6;
      double worst = 0.0;
      double norm = 0.0;
      for (std::size_t i = 0; i < 15; ++i) {
        auto plus = pi;
        auto minus = pi;
        plus.all_logits()[i] += h;
        minus.all_logits()[i] -= h;
        const double fd = (actor_loss(plus, ctx, states).total - actor_loss(minus, ctx, states).total) / (2 * h);
        worst = std::max(worst, std::abs(fd - grad[i]));
        norm = std::max(norm, std::abs(grad[i]));
      }
      // total variation has kinks; a random instance sits away from them
      CHECK(worst <= 1e-6 * std::max(1.0, norm));
    }
  }

  TEST_CASE("zero iterations return the uniform policy") {
    const auto env = make_environment(stitching_maze(), "stitching");
    const auto d = make_stitching_dataset(*env.maze, 2, 0);
    auto c = quick_config(Regularizer::odaf, 0);
    c.iterations = 0;
    const auto result = train(c, d, env);
    CHECK(result.policy == SoftmaxPolicy(49, 4));
  }

  TEST_CASE("unregularized training on full coverage reaches the optimum") {
    const auto maze = parse_maze("S........G\n");
    const auto env = make_environment(maze, "corridor");
    const auto d = full_coverage(maze);
    const auto q = oracle_value_iteration(env.mdp);
    const auto oracle_policy = SoftmaxPolicy::near_deterministic(kNumMoves, q.greedy_policy());
    const double optimal = evaluate(oracle_policy, env.mdp, 1, env.horizon, 0).return_mean;
    CHECK(optimal == 41.0);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto result = train(quick_config(Regularizer::none, seed), d, env);
      const double ret = evaluate(result.policy, env.mdp, 1, env.horizon, seed).return_mean;
      CHECK(ret >= 0.95 * optimal);
    }
  }

  TEST_CASE("training is deterministic in the seed") {
    const auto env = make_environment(stitching_maze(), "stitching");
    const auto d = make_stitching_dataset(*env.maze, 3, 1);
    auto c = quick_config(Regularizer::odaf, 4);
    c.iterations = 400;
    c.eval_every = 100;
    const auto a = train(c, d, env);
    const auto b = train(c, d, env);
    CHECK(a.diagnostics.to_csv() == b.diagnostics.to_csv());
    CHECK(a.policy == b.policy);
    CHECK(a.ensemble == b.ensemble);
    c.seed = 5;
    CHECK(train(c, d, env).diagnostics.to_csv() != a.diagnostics.to_csv());
  }

  TEST_CASE("diagnostics CSV layout") {
    const auto env = make_environment(stitching_maze(), "stitching");
    const auto d = make_stitching_dataset(*env.maze, 2, 1);
    auto c = quick_config(Regularizer::odaf, 0);
    c.iterations = 300;
    c.eval_every = 100;
    const auto csv = train(c, d, env).diagnostics.to_csv();
    CHECK(csv.rfind(std::string(TrainDiagnostics::kCsvHeader) + "\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  }

  TEST_CASE("divergent critic raises TrainingError") {
    const auto env = make_environment(stitching_maze(), "stitching");
    const auto d = make_stitching_dataset(*env.maze, 2, 0);
    auto c = quick_config(Regularizer::none, 0);
    c.critic_lr = 1e300;
    c.iterations = 200;
    CHECK_THROWS_WITH_AS(train(c, d, env), doctest::Contains("iteration"), TrainingError);
  }

  TEST_CASE("empty dataset is refused") {
    const auto env = make_environment(stitching_maze(), "stitching");
    CHECK_THROWS_AS(train(quick_config(Regularizer::odaf, 0), TransitionDataset(49, 4, {}), env), std::invalid_argument);
  }

  TEST_CASE("config text") {
    std::map<std::string, std::string> extra;
    const auto c = parse_config("# comment\niterations = 12\n\nregularizer = behavior_clone  # trailing\nenv = open10\n",
                                &extra);
    CHECK(c.iterations == 12);
    CHECK(c.regularizer == Regularizer::behavior_clone);
    CHECK(extra.at("env") == "open10");
    CHECK(c.beta_odaf == 0.3);
    CHECK(c.k == 10);

    CHECK_THROWS_AS(parse_config("iterations = 3\niterations = 4\n"), ParseError);
    try {
      parse_config("k = 4\nnonsense\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
    try {
      parse_config("iterations = 5\nlearning_rate = 0.1\n");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
      CHECK(std::string(e.what()).find("beta_odaf") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config("k = many\n"), ParseError);
    CHECK_THROWS_AS(parse_config("k = 1\n"), std::invalid_argument);
    CHECK(parse_config("model_critic = off\n").model_critic == ModelCritic::off);
    CHECK_THROWS(parse_config("model_critic = sometimes\n"));
    CHECK_THROWS_AS(load_config("/nonexistent/odaf.cfg"), std::invalid_argument);
  }

  TEST_CASE("config map round trip") {
    TrainConfig c;
    c.iterations = 77;
    c.regularizer = Regularizer::state_recovery;
    c.seed = 123456789012345ULL;
    c.actor_lr = 0.0123456789;
    TrainConfig back;
    for (const auto& [k, v] : c.to_map()) back.set(k, v);
    CHECK(back.to_json() == c.to_json());
    CHECK(c.to_map().size() == TrainConfig::keys().size());
  }

  TEST_CASE("uncertainty ceiling") {
    const TransitionDataset d(2, 1, {{0, 0, -4.0, 1, false}, {1, 0, 2.0, 0, false}});
    CHECK(uncertainty_ceiling(d, 0.5, 0.9) == doctest::Approx(20.0));
  }
}
