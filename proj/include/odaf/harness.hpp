#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "odaf/dataset.hpp"
#include "odaf/environment.hpp"
#include "odaf/evaluation.hpp"
#include "odaf/trainer.hpp"

namespace odaf {

struct MethodSpec {
  std::string name;
  TrainConfig config;
};

/// Declarative description of one experiment, embedded in its results.
struct ExperimentSpec {
  std::string name;
  std::string environment;
  std::string dataset_recipe;
  std::vector<MethodSpec> methods;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path out_dir;

  /// Throws std::invalid_argument without seeds or with repeated method names.
  void validate() const;
  nlohmann::json to_json() const;
};

/// One trained (method, seed) cell of an experiment.
struct RunRecord {
  std::string method;
  std::string environment;
  std::uint64_t seed = 0;
  TrainConfig config;
  EvalReport eval;
  std::vector<Transition> trajectory;
  /// Steps of the greedy trajectory whose (s,a) is absent from the dataset.
  int ood_pairs = 0;
  TrainDiagnostics diagnostics;
  /// Experiment-specific fields (ratio, normalized score, ...).
  nlohmann::json extra = nlohmann::json::object();

  /// FNV-1a of the resolved config, used with the seed as the merge key.
  std::string config_hash() const;
  std::string tag() const;
  nlohmann::json to_json() const;
};

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
  nlohmann::json data = nlohmann::json::object();
  double seconds = 0.0;

  nlohmann::json to_json() const;
};

struct ExperimentResult {
  ExperimentSpec spec;
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<RunRecord> runs;
  std::vector<CheckResult> checks;

  bool pass() const;
  nlohmann::json to_json() const;
  /// Runs matching `method` (and `environment` when non-empty), in seed order.
  std::vector<const RunRecord*> select(const std::string& method, const std::string& environment = {}) const;
};

/// Writes results.json, summary.csv, trajectories.csv and one diagnostics CSV per run.
void write_experiment(const ExperimentResult& result, const std::filesystem::path& dir);

struct ExperimentOptions {
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  /// Shared settings; each method overrides only its regularizer or penalty weight.
  TrainConfig base;
  /// Concurrent training runs; 0 picks the hardware concurrency.
  int threads = 0;
};

/// Runs `job(i)` for i in [0, n) on up to `threads` workers. The first
/// exception is rethrown after all workers stop.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& job);

/// Five methods on the stitching dataset (10 episodes per family).
ExperimentResult run_stitching_experiment(const ExperimentOptions& options);

inline const std::vector<double> kDefaultRatios{0.5, 0.6, 0.7, 0.8, 0.9};

/// odaf and action_support on expert/random mixtures of the open 10x10 maze.
/// Scores are normalized so the uniform random policy scores 0 and the oracle 100.
ExperimentResult run_mix_ratio_sweep(const ExperimentOptions& options,
                                     const std::vector<double>& ratios = kDefaultRatios);

/// beta_odaf 0.3 against 0 with otherwise identical configs, on the stitching
/// maze and on the partial-coverage maze.
ExperimentResult run_ablation(const ExperimentOptions& options);

/// Validation scores of a trained ensemble on the partial-coverage maze, split
/// by whether the action's outcomes leave the state support.
ExperimentResult run_validation_experiment(const ExperimentOptions& options);

/// Dataset used by the partial-coverage experiments: `episodes` oracle-greedy
/// rollouts on partial10.
TransitionDataset partial_coverage_dataset(const Environment& env, int episodes, std::uint64_t seed);

/// Policy checkpoint: {"format": "odaf-policy-v1", "environment", "num_states", "num_actions", "logits"}.
nlohmann::json policy_to_json(const SoftmaxPolicy& policy, const std::string& environment);
/// Throws std::invalid_argument on a malformed checkpoint.
SoftmaxPolicy policy_from_json(const nlohmann::json& j, std::string* environment = nullptr);

// ---------------------------------------------------------------------------
// Verification suite

CheckResult check_contraction(std::uint64_t seed = 0, int mdps = 10, int trials = 1000);
CheckResult check_theorem1(std::uint64_t seed = 0, int triples = 100);
CheckResult check_theorem2(std::uint64_t seed = 0, int mdps = 10);
CheckResult check_corollary1();
CheckResult check_assumption1(std::uint64_t seed = 0, int seeds = 5, int iterations = 10000);
CheckResult check_gradients(std::uint64_t seed = 0, int configs = 100);

struct VerificationReport {
  std::vector<CheckResult> checks;

  bool pass() const;
  nlohmann::json to_json() const;
};

VerificationReport run_verification_suite(std::uint64_t seed = 0);

}  // namespace odaf
