#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>

#include "odaf/evaluation.hpp"
#include "odaf/harness.hpp"
#include "odaf/operators.hpp"
#include "oracles.hpp"

using namespace odaf;

namespace {

std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "odaf_unit" / name;
  std::filesystem::remove_all(dir);
  return dir;
}

SoftmaxPolicy oracle_policy(const TabularMdp& m) {
  return SoftmaxPolicy::near_deterministic(m.num_actions, oracle_value_iteration(m).greedy_policy());
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("oracle policy earns the oracle path return every episode") {
    const auto maze = stitching_maze();
    const auto m = compile(maze);
    const auto report = evaluate(oracle_policy(m), m, 20, maze.horizon, 3);
    CHECK(report.return_mean == 44.0);
    CHECK(report.return_std == 0.0);
    CHECK(report.per_episode_returns.size() == 20);
    CHECK(expected_greedy_return(oracle_policy(m), m, maze.horizon) == doctest::Approx(44.0));
  }

  TEST_CASE("uniform policy on a zero-reward MDP returns 0") {
    auto m = build_random_mdp(5, 3, 2, 1.0, 0.9, 2);
    std::fill(m.reward.begin(), m.reward.end(), 0.0);
    const auto report = evaluate(SoftmaxPolicy(5, 3), m, 10, 20, 0, ActionSelection::sample);
    CHECK(report.return_mean == 0.0);
  }

  TEST_CASE("horizon 1 returns the one-step reward") {
    const auto maze = stitching_maze();
    const auto m = compile(maze);
    const auto pi = SoftmaxPolicy::near_deterministic(4, std::vector<int>(49, static_cast<int>(Move::up)));
    CHECK(evaluate(pi, m, 3, 1, 0).return_mean == maze.step_reward);
    CHECK(expected_greedy_return(pi, m, 1) == maze.step_reward);
    CHECK_THROWS_AS(expected_greedy_return(pi, m, 0), std::invalid_argument);
  }

  TEST_CASE("stitched trajectories") {
    const auto maze = stitching_maze();
    const auto m = compile(maze);
    CHECK(is_stitched(greedy_trajectory(oracle_policy(m), m, maze.horizon, 0), maze));
    const auto detour = rollout(m, stitching_scripts().detour, 1, maze.horizon, 0);
    CHECK_FALSE(is_stitched(detour.transitions(), maze));
    const auto fragment = rollout(m, stitching_scripts().fragment, 1, maze.horizon, 0);
    CHECK_FALSE(is_stitched(fragment.transitions(), maze));
  }

  TEST_CASE("policy checkpoint round trip") {
    const SoftmaxPolicy pi(3, 2, {0.1, -0.2, 1e-17, 3.5, -7.25, 0.0});
    std::string env;
    const auto back = policy_from_json(policy_to_json(pi, "open10"), &env);
    CHECK(back == pi);
    CHECK(env == "open10");
    auto broken = policy_to_json(pi, "open10");
    broken["logits"].erase(0);
    CHECK_THROWS_AS(policy_from_json(broken), std::invalid_argument);
    auto wrong = policy_to_json(pi, "open10");
    wrong["format"] = "something-else";
    CHECK_THROWS_AS(policy_from_json(wrong), std::invalid_argument);
  }

  TEST_CASE("experiment spec validation") {
    ExperimentSpec spec;
    spec.name = "x";
    spec.methods = {{"odaf", {}}, {"none", {}}};
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
    spec.seeds = {0, 1};
    CHECK_NOTHROW(spec.validate());
    spec.methods.push_back({"odaf", {}});
    CHECK_THROWS_AS(spec.validate(), std::invalid_argument);
  }

  TEST_CASE("config hash keys the run") {
    RunRecord a;
    a.method = "odaf";
    RunRecord b = a;
    CHECK(a.config_hash() == b.config_hash());
    b.config.beta_odaf = 0.0;
    CHECK(a.config_hash() != b.config_hash());
    CHECK(a.config_hash().size() == 16);
  }

  TEST_CASE("parallel_for covers every index and rethrows") {
    std::vector<std::atomic<int>> hits(50);
    parallel_for(50, 4, [&](std::size_t i) { ++hits[i]; });
    for (const auto& h : hits) CHECK(h.load() == 1);
    CHECK_THROWS_WITH(parallel_for(10, 3, [](std::size_t i) {
                        if (i == 6) throw std::runtime_error("job 6 failed");
                      }),
                      "job 6 failed");
  }

  TEST_CASE("small stitching experiment writes every artifact") {
    ExperimentOptions options;
    options.seeds = {0, 1};
    options.base.iterations = 200;
    options.base.eval_every = 100;
    const auto result = run_stitching_experiment(options);
    CHECK(result.runs.size() == 10);
    CHECK(result.select("odaf").size() == 2);
    CHECK(result.select("behavior_clone")[1]->seed == 1);
    CHECK(result.metadata["dataset"]["max_return"] == 38.0);

    const auto dir = fresh_dir("stitching_small");
    write_experiment(result, dir);
    for (const char* f : {"results.json", "summary.csv", "trajectories.csv"}) CHECK(std::filesystem::exists(dir / f));
    int diagnostics = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir / "diagnostics")) diagnostics += entry.is_regular_file();
    CHECK(diagnostics == 10);

    std::ifstream in(dir / "results.json");
    const auto j = nlohmann::json::parse(in);
    CHECK(j["runs"].size() == 10);
    CHECK(j["spec"]["seeds"].size() == 2);
    for (const auto& run : j["runs"]) {
      CHECK(run.contains("config"));
      CHECK(run.contains("seed"));
      CHECK(run.contains("config_hash"));
    }
    CHECK(j["checks"].is_array());
  }

  TEST_CASE("verification report layout") {
    VerificationReport report;
    report.checks.push_back(check_contraction(0, 2, 50));
    report.checks.push_back(check_gradients(0, 5));
    CHECK(report.pass());
    const auto j = report.to_json();
    CHECK(j["format"] == "odaf-verify-v1");
    CHECK(j["pass"] == true);
    REQUIRE(j["checks"].size() == 2);
    for (const auto& c : j["checks"]) {
      CHECK(c["check"].is_string());
      CHECK(c["pass"].is_boolean());
      CHECK(c["detail"].is_string());
      CHECK(c["seconds"].is_number());
    }
  }

  TEST_CASE("partial-coverage dataset leaves part of the maze unvisited") {
    const auto env = parse_environment("partial10");
    const auto d = partial_coverage_dataset(env, 5, 0);
    int open = 0;
    for (int s = 0; s < 100; ++s) open += !env.maze->is_wall(s);
    CHECK(static_cast<int>(d.state_support().size()) < open);
    CHECK(d.episode_starts().size() == 5);
    CHECK(partial_coverage_dataset(env, 5, 0).transitions() == d.transitions());
  }
}
