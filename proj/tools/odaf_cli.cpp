// Command-line front end: verification suite, training, evaluation,
// experiments and dataset utilities.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "odaf/errors.hpp"
#include "odaf/harness.hpp"
#include "odaf/operators.hpp"

namespace fs = std::filesystem;
using namespace odaf;

namespace {

/// Bad flags, files or config values. Reported with exit code 2.
struct ArgumentError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr int kExitFailure = 1;
constexpr int kExitArgument = 2;

const std::set<std::string> kTrainExtraKeys{"env", "dataset", "episodes"};

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError(path.string() + ": " + e.what());
  }
}

Environment environment_or_throw(const std::string& spec) {
  try {
    return parse_environment(spec);
  } catch (const std::exception& e) {
    throw ArgumentError(e.what());
  }
}

/// Built-in dataset recipes, or a JSON Lines file.
TransitionDataset make_dataset(const std::string& recipe, const Environment& env, int episodes, std::uint64_t seed) {
  if (recipe == "stitching") {
    if (!env.maze || env.name != "stitching") throw ArgumentError("the stitching recipe needs --env stitching");
    return make_stitching_dataset(*env.maze, episodes, seed);
  }
  if (recipe == "oracle") {
    const auto q = oracle_value_iteration(env.mdp);
    return rollout(env.mdp, SoftmaxPolicy::near_deterministic(env.mdp.num_actions, q.greedy_policy()), episodes,
                   env.horizon, mix_seed(seed, 77));
  }
  if (recipe == "uniform") {
    return rollout(env.mdp, SoftmaxPolicy(env.mdp.num_states, env.mdp.num_actions), episodes, env.horizon, seed);
  }
  if (!fs::exists(recipe)) {
    throw ArgumentError("dataset '" + recipe + "' is neither a recipe (stitching, oracle, uniform) nor a file");
  }
  return load_dataset(recipe, env.mdp.num_states, env.mdp.num_actions);
}

std::string trajectory_csv(const std::vector<Transition>& trajectory) {
  std::ostringstream out;
  out << "step,state,action,reward,next_state,done\n";
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    const auto& t = trajectory[i];
    out << i << ',' << t.state << ',' << t.action << ',' << t.reward << ',' << t.next_state << ',' << (t.done ? 1 : 0)
        << '\n';
  }
  return out.str();
}

void print_checks(const std::vector<CheckResult>& checks) {
  for (const auto& c : checks) {
    std::printf("%s %s: %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
  }
}

std::vector<std::uint64_t> seed_list(int count, std::uint64_t first) {
  if (count < 1) throw ArgumentError("--seeds must be at least 1");
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < count; ++i) seeds.push_back(first + static_cast<std::uint64_t>(i));
  return seeds;
}

// ---------------------------------------------------------------------------

int cmd_verify(std::uint64_t seed, const std::string& out) {
  const auto report = run_verification_suite(seed);
  print_checks(report.checks);
  if (!out.empty()) write_text(fs::path(out) / "verify.json", report.to_json().dump(2) + "\n");
  return report.pass() ? 0 : kExitFailure;
}

int cmd_train(const std::string& config_path, const std::string& out, int iterations_override) {
  if (!fs::exists(config_path)) throw ArgumentError("config file not found: " + config_path);
  std::map<std::string, std::string> extra;
  TrainConfig config;
  try {
    config = load_config(config_path, &extra);
    for (const auto& [key, value] : extra) {
      if (!kTrainExtraKeys.contains(key)) {
        std::string valid;
        for (const auto& k : TrainConfig::keys()) valid += " " + k;
        for (const auto& k : kTrainExtraKeys) valid += " " + k;
        throw ArgumentError(config_path + ": unknown key '" + key + "'; valid keys:" + valid);
      }
    }
    if (iterations_override >= 0) config.iterations = iterations_override;
    config.validate();
  } catch (const ParseError& e) {
    throw ArgumentError(config_path + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw ArgumentError(config_path + ": " + e.what());
  }

  const std::string env_spec = extra.contains("env") ? extra["env"] : "stitching";
  const auto env = environment_or_throw(env_spec);
  const std::string recipe = extra.contains("dataset") ? extra["dataset"] : (env.name == "stitching" ? "stitching" : "oracle");
  const int episodes = extra.contains("episodes") ? std::stoi(extra["episodes"]) : (recipe == "stitching" ? 10 : 5);
  const auto dataset = make_dataset(recipe, env, episodes, config.seed);

  auto trained = train(config, dataset, env);
  auto eval = evaluate(trained.policy, env.mdp, config.eval_episodes, env.horizon, mix_seed(config.seed, 5));
  const auto trajectory = greedy_trajectory(trained.policy, env.mdp, env.horizon, mix_seed(config.seed, 6));
  if (env.maze && env.name == "stitching") eval.stitched = is_stitched(trajectory, *env.maze);

  const fs::path dir(out);
  write_text(dir / "diagnostics.csv", trained.diagnostics.to_csv());
  write_text(dir / "policy.json", policy_to_json(trained.policy, env_spec).dump() + "\n");
  write_text(dir / "trajectory.csv", trajectory_csv(trajectory));
  nlohmann::json results{{"format", "odaf-train-v1"},
                         {"environment", env_spec},
                         {"dataset", {{"recipe", recipe}, {"episodes", episodes}, {"transitions", dataset.size()}}},
                         {"config", config.to_json()},
                         {"seed", config.seed},
                         {"u_max", trained.u_max},
                         {"eval", to_json(eval)}};
  write_text(dir / "results.json", results.dump(2) + "\n");
  std::printf("return %.6g +- %.6g over %d episodes%s\n", eval.return_mean, eval.return_std, eval.episodes,
              eval.stitched ? (*eval.stitched ? " (stitched)" : " (not stitched)") : "");
  return 0;
}

int cmd_eval(const std::string& policy_path, const std::string& env_spec, int episodes, std::uint64_t seed,
             const std::string& out) {
  std::string stored_env;
  SoftmaxPolicy policy;
  try {
    policy = policy_from_json(read_json(policy_path), &stored_env);
  } catch (const std::invalid_argument& e) {
    throw ArgumentError(policy_path + ": " + e.what());
  }
  const auto env = environment_or_throw(env_spec.empty() ? stored_env : env_spec);
  if (policy.num_states() != env.mdp.num_states || policy.num_actions() != env.mdp.num_actions) {
    throw ArgumentError("policy shape does not match environment " + env.name);
  }
  auto report = evaluate(policy, env.mdp, episodes, env.horizon, seed);
  const auto trajectory = greedy_trajectory(policy, env.mdp, env.horizon, seed);
  if (env.maze && env.name == "stitching") report.stitched = is_stitched(trajectory, *env.maze);
  const auto j = to_json(report);
  std::printf("%s\n", j.dump(2).c_str());
  if (!out.empty()) {
    write_text(fs::path(out) / "eval.json", j.dump(2) + "\n");
    write_text(fs::path(out) / "trajectory.csv", trajectory_csv(trajectory));
  }
  return 0;
}

int cmd_experiment(const std::string& name, int seeds, std::uint64_t first_seed, const std::string& out,
                   const std::string& config_path, int iterations, int threads) {
  ExperimentOptions options;
  options.seeds = seed_list(seeds, first_seed);
  options.threads = threads;
  if (!config_path.empty()) {
    if (!fs::exists(config_path)) throw ArgumentError("config file not found: " + config_path);
    try {
      options.base = load_config(config_path);
    } catch (const std::exception& e) {
      throw ArgumentError(config_path + ": " + e.what());
    }
  }
  if (iterations >= 0) options.base.iterations = iterations;
  try {
    options.base.validate();
  } catch (const std::invalid_argument& e) {
    throw ArgumentError(e.what());
  }

  ExperimentResult result;
  if (name == "stitching") {
    result = run_stitching_experiment(options);
  } else if (name == "mixratio") {
    result = run_mix_ratio_sweep(options);
  } else if (name == "ablation") {
    result = run_ablation(options);
  } else {
    result = run_validation_experiment(options);
  }
  result.spec.out_dir = out;
  write_experiment(result, out);
  print_checks(result.checks);
  return result.pass() ? 0 : kExitFailure;
}

int cmd_dataset_make(const std::string& env_spec, const std::string& recipe, int episodes, std::uint64_t seed,
                     const std::string& out) {
  const auto env = environment_or_throw(env_spec);
  if (recipe != "stitching" && recipe != "oracle" && recipe != "uniform") {
    throw ArgumentError("unknown recipe '" + recipe + "' (expected stitching, oracle, uniform)");
  }
  const auto data = make_dataset(recipe, env, episodes, seed);
  save_dataset(data, out);
  std::printf("%zu transitions written to %s\n", data.size(), out.c_str());
  return 0;
}

int cmd_dataset_mix(const std::string& expert_path, const std::string& random_path, double ratio, std::uint64_t seed,
                    const std::string& granularity, const std::string& out) {
  const auto expert = load_dataset(expert_path);
  const auto random = load_dataset(random_path);
  const int S = std::max(expert.num_states(), random.num_states());
  const int A = std::max(expert.num_actions(), random.num_actions());
  const auto e = load_dataset(expert_path, S, A);
  const auto r = load_dataset(random_path, S, A);
  const auto mode = granularity == "trajectory" ? MixGranularity::trajectory : MixGranularity::transition;
  const auto mixed = mix_datasets(e, r, ratio, seed, mode);
  save_dataset(mixed, out);
  std::printf("%zu transitions written to %s\n", mixed.size(), out.c_str());
  return 0;
}

int cmd_dataset_stats(const std::string& path, const std::string& env_spec) {
  TransitionDataset data;
  if (env_spec.empty()) {
    data = load_dataset(path);
  } else {
    const auto env = environment_or_throw(env_spec);
    data = load_dataset(path, env.mdp.num_states, env.mdp.num_actions);
  }
  const auto returns = data.episode_returns();
  double mean = 0.0;
  double best = returns.empty() ? 0.0 : returns.front();
  for (double r : returns) {
    mean += r;
    best = std::max(best, r);
  }
  if (!returns.empty()) mean /= static_cast<double>(returns.size());
  std::size_t pairs = 0;
  for (int s = 0; s < data.num_states(); ++s) {
    for (int a = 0; a < data.num_actions(); ++a) pairs += data.in_pair_support(s, a) ? 1 : 0;
  }
  const nlohmann::json j{{"transitions", data.size()},         {"episodes", returns.size()},
                         {"num_states", data.num_states()},    {"num_actions", data.num_actions()},
                         {"state_support", data.state_support().size()},
                         {"visited_states", data.visited_states().size()},
                         {"pair_support", pairs},              {"mean_return", mean},
                         {"max_return", best}};
  std::printf("%s\n", j.dump(2).c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Outcome-driven action flexibility: tabular offline RL laboratory"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  std::string out;
  std::string config_path;
  std::string env_spec;
  std::string policy_path;
  int episodes = 10;
  int iterations = -1;
  int threads = 0;

  auto* verify = app.add_subcommand("verify", "Run the verification suite");
  verify->add_option("--seed", seed, "Base seed");
  verify->add_option("--out", out, "Directory for verify.json");

  auto* train_cmd = app.add_subcommand("train", "Train one policy from a config file");
  train_cmd->add_option("--config", config_path, "key = value config file")->required();
  train_cmd->add_option("--out", out, "Output directory")->default_val("out/train");
  train_cmd->add_option("--iterations", iterations, "Override the configured iteration count");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a policy checkpoint");
  eval_cmd->add_option("--policy", policy_path, "policy.json written by train")->required();
  eval_cmd->add_option("--env", env_spec, "Environment spec (defaults to the one stored in the checkpoint)");
  eval_cmd->add_option("--episodes", episodes, "Evaluation episodes")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--seed", seed, "Evaluation seed");
  eval_cmd->add_option("--out", out, "Directory for eval.json and trajectory.csv");

  auto* exp = app.add_subcommand("experiment", "Run a headline experiment");
  std::string exp_name;
  int seeds = 5;
  exp->add_option("name", exp_name, "stitching | mixratio | ablation | validation")
      ->required()
      ->check(CLI::IsMember({"stitching", "mixratio", "ablation", "validation"}));
  exp->add_option("--seeds", seeds, "Number of seeds");
  exp->add_option("--seed", seed, "First seed");
  exp->add_option("--out", out, "Output directory")->required();
  exp->add_option("--config", config_path, "Base config shared by all methods");
  exp->add_option("--iterations", iterations, "Override the iteration count");
  exp->add_option("--threads", threads, "Concurrent training runs (0 = all cores)");

  auto* dataset = app.add_subcommand("dataset", "Dataset utilities");
  dataset->require_subcommand(1);
  auto* make = dataset->add_subcommand("make", "Generate a dataset");
  std::string recipe = "stitching";
  make->add_option("--env", env_spec, "Environment spec")->default_val("stitching");
  make->add_option("--recipe", recipe, "stitching | oracle | uniform");
  make->add_option("--episodes", episodes, "Episodes (per family for stitching)");
  make->add_option("--seed", seed, "Seed");
  make->add_option("--out", out, "Output .jsonl")->required();
  auto* mix = dataset->add_subcommand("mix", "Mix expert and random datasets");
  std::string expert_path;
  std::string random_path;
  double ratio = 0.5;
  std::string granularity = "transition";
  mix->add_option("--expert", expert_path)->required();
  mix->add_option("--random", random_path)->required();
  mix->add_option("--ratio", ratio, "Fraction drawn from the random dataset")->check(CLI::Range(0.0, 1.0));
  mix->add_option("--seed", seed);
  mix->add_option("--granularity", granularity)->check(CLI::IsMember({"transition", "trajectory"}));
  mix->add_option("--out", out, "Output .jsonl")->required();
  auto* stats = dataset->add_subcommand("stats", "Summarize a dataset file");
  std::string stats_path;
  stats->add_option("path", stats_path)->required();
  stats->add_option("--env", env_spec, "Environment spec fixing the dimensions");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitArgument;
  }

  try {
    if (*verify) return cmd_verify(seed, out);
    if (*train_cmd) return cmd_train(config_path, out, iterations);
    if (*eval_cmd) return cmd_eval(policy_path, env_spec, episodes, seed, out);
    if (*exp) return cmd_experiment(exp_name, seeds, seed, out, config_path, iterations, threads);
    if (*make) return cmd_dataset_make(env_spec, recipe, episodes, seed, out);
    if (*mix) return cmd_dataset_mix(expert_path, random_path, ratio, seed, granularity, out);
    if (*stats) return cmd_dataset_stats(stats_path, env_spec);
  } catch (const ArgumentError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitArgument;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitArgument;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitArgument;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "failed: %s\n", e.what());
    return kExitFailure;
  }
  return kExitArgument;
}
