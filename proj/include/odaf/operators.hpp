#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "odaf/dataset.hpp"
#include "odaf/dynamics.hpp"
#include "odaf/mdp.hpp"

namespace odaf {

/// Q(s,a) table, row-major over states.
struct QTable {
  int num_states = 0;
  int num_actions = 0;
  std::vector<double> values;

  QTable() = default;
  QTable(int states, int actions, double fill = 0.0)
      : num_states(states), num_actions(actions),
        values(static_cast<std::size_t>(states) * static_cast<std::size_t>(actions), fill) {}

  double& operator()(int s, int a) { return values[static_cast<std::size_t>(s) * num_actions + a]; }
  double operator()(int s, int a) const { return values[static_cast<std::size_t>(s) * num_actions + a]; }

  double max_value(int s) const;
  /// Lowest-index maximizer.
  int greedy_action(int s) const;
  std::vector<int> greedy_policy() const;

  friend bool operator==(const QTable&, const QTable&) = default;
};

/// Sup-norm distance.
double sup_distance(const QTable& x, const QTable& y);

/// Sparse transition/reward view shared by the backup operators.
struct BackupModel {
  int num_states = 0;
  int num_actions = 0;
  double discount = 0.9;
  std::vector<std::vector<Outcome>> rows;
  std::vector<double> reward;

  const std::vector<Outcome>& row(int s, int a) const { return rows[static_cast<std::size_t>(s) * num_actions + a]; }
  double r(int s, int a) const { return reward[static_cast<std::size_t>(s) * num_actions + a]; }
};

BackupModel backup_model(const TabularMdp& mdp);
/// Rows and rewards of the empirical model; the discount is supplied by the caller.
BackupModel backup_model(const EmpiricalDynamics& dyn, double discount);

/// Per-state actions whose outcomes stay inside the state support.
///
/// A deterministic policy belongs to the outcome-driven candidate set iff it
/// picks an admissible action at every state. `fallback[s]` is the action with
/// the least out-of-support mass (ties to the lowest index) and is used where
/// no action is admissible.
struct AdmissibleActionSets {
  std::vector<std::vector<int>> actions;
  std::vector<int> fallback;
  /// Actions the backup maximizes over: the admissible set, or {fallback} when empty.
  std::vector<std::vector<int>> candidates;
};

AdmissibleActionSets admissible_actions(const EmpiricalDynamics& dyn);
/// Every action admissible everywhere.
AdmissibleActionSets all_actions(int num_states, int num_actions);

/// r + gamma * E[max_a' Q(s',a')].
QTable standard_backup(const QTable& q, const BackupModel& model);
/// Inner max restricted to dataset-supported pairs; a next state without any
/// supported action contributes nothing beyond the reward.
QTable action_support_backup(const QTable& q, const BackupModel& model, const EmpiricalDynamics& dyn);
/// Inner max restricted to admissible actions (outcome-driven bootstrapping).
QTable outcome_driven_backup(const QTable& q, const BackupModel& model, const AdmissibleActionSets& admissible);

using Backup = std::function<QTable(const QTable&)>;

struct FixedPointResult {
  QTable q;
  /// ||Q_{k+1} - Q_k||_inf per sweep.
  std::vector<double> trace;
  int iterations = 0;
};

/// Synchronous iteration until the sup-norm delta drops below tol.
/// Throws ConvergenceError (carrying the trace) after max_iter sweeps.
FixedPointResult solve_fixed_point(const Backup& backup, QTable q0, double tol, int max_iter);

/// Ground-truth Q* of the true MDP by Gauss-Jacobi value iteration on the dense
/// tensor. Shares no code with the backup operators.
QTable oracle_value_iteration(const TabularMdp& mdp, double tol = 1e-12);

/// Exact value of a deterministic policy (Jacobi policy evaluation on the dense tensor).
std::vector<double> evaluate_deterministic_policy(const TabularMdp& mdp, const std::vector<int>& actions,
                                                  double tol = 1e-12);

// ---------------------------------------------------------------------------
// Verification routines. Each returns a report serializable to JSON with fields
// {check, pass, ...}.

struct ContractionReport {
  std::string check = "contraction";
  bool pass = true;
  int trials = 0;
  double max_ratio = 0.0;
  double gamma = 0.0;
  /// First violating pair, if any.
  std::optional<std::pair<QTable, QTable>> counterexample;
};

/// Random pairs u, v; asserts ||Bu - Bv|| <= gamma ||u - v|| + 1e-9.
ContractionReport verify_contraction(const Backup& backup, int num_states, int num_actions, double gamma, int trials,
                                     std::uint64_t seed);

struct RateReport {
  std::string check = "theorem2_rate";
  bool pass = true;
  double gamma = 0.0;
  double initial_error = 0.0;
  std::vector<double> errors;
  std::vector<double> delta_ratios;
  double max_delta_ratio = 0.0;
  double slope = 0.0;
  std::string failure;
};

/// Iterates the outcome-driven backup of `dyn` from q0 for k_max sweeps and
/// checks the geometric envelope ||Q^k - Q*|| <= gamma^k ||Q^0 - Q*||, the
/// per-sweep delta ratio, and the log-error regression slope.
RateReport verify_theorem2_rate(const EmpiricalDynamics& dyn, double discount, const QTable& q0, int k_max);

struct GapRow {
  int dataset_size = 0;
  std::vector<double> gaps;
  double median_gap = 0.0;
};

struct GapReport {
  std::string check = "theorem2_gap";
  bool pass = true;
  std::vector<GapRow> rows;
};

/// ||Q-hat* - Q*||_inf of the outcome-driven fixed point against the oracle, for
/// uniform-policy rollout datasets of each size, over `seeds` seeds.
GapReport theorem2_gap_table(const TabularMdp& mdp, const std::vector<int>& sizes, int seeds, std::uint64_t seed);

struct CorollaryReport {
  std::string check = "corollary1";
  bool pass = true;
  std::vector<int> optimal_path_states;
  std::vector<int> disagreeing_states;
  double max_q_gap = 0.0;
};

/// Greedy agreement of the outcome-driven fixed point with the oracle on every
/// state reachable from the start under the oracle-optimal policy.
CorollaryReport verify_corollary1(const TabularMdp& mdp, const EmpiricalDynamics& dyn, double tol = 1e-10);

nlohmann::json to_json(const ContractionReport& report);
nlohmann::json to_json(const RateReport& report);
nlohmann::json to_json(const GapReport& report);
nlohmann::json to_json(const CorollaryReport& report);
nlohmann::json to_json(const QTable& q);

}  // namespace odaf
