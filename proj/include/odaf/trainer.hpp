#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "odaf/dataset.hpp"
#include "odaf/dynamics.hpp"
#include "odaf/ensemble.hpp"
#include "odaf/environment.hpp"
#include "odaf/policy.hpp"

namespace odaf {

enum class Regularizer { none, odaf, action_support, state_recovery, behavior_clone };

std::string_view regularizer_name(Regularizer r);
/// Throws std::invalid_argument for unknown names.
Regularizer parse_regularizer(std::string_view name);

/// Whether the critic also trains on one-step transitions of the dynamics model
/// for unseen actions. `automatic` enables it for the methods that fit a model
/// (odaf, state_recovery).
enum class ModelCritic { automatic, on, off };

struct TrainConfig {
  int iterations = 50000;
  int batch_size = 64;
  double actor_lr = 0.01;
  double critic_lr = 0.1;
  int k = 10;
  double tau = 0.01;
  double beta_u = 1.0;
  double entropy_coef = 0.05;
  double beta_odaf = 0.3;
  int perturb_radius = 1;
  Regularizer regularizer = Regularizer::odaf;
  double smoothing = 0.0;
  std::uint64_t seed = 0;
  int eval_every = 5000;
  int eval_episodes = 10;
  /// Half-width of the critic's uniform initialization as a fraction of
  /// R_max / (1 - gamma), so never-trained pairs read as pessimistic and uncertain.
  double init_scale = 1.0;
  double mask_prob = 0.8;
  ModelCritic model_critic = ModelCritic::automatic;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  bool uses_model_critic() const;

  /// Keys accepted by `set` and the config file parser.
  static const std::vector<std::string>& keys();
  /// Assigns one field from its text form. Unknown keys throw with the list of valid keys.
  void set(const std::string& key, const std::string& value);
  std::map<std::string, std::string> to_map() const;
  nlohmann::json to_json() const;
};

/// Flat `key = value` text, `#` starts a comment. Throws ParseError with a line number.
/// Keys outside TrainConfig (such as `env`) are returned in `extra` when given,
/// and rejected otherwise.
TrainConfig parse_config(std::string_view text, std::map<std::string, std::string>* extra = nullptr);
TrainConfig load_config(const std::filesystem::path& path, std::map<std::string, std::string>* extra = nullptr);

struct DiagnosticRecord {
  int iteration = 0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double odaf_penalty = 0.0;
  double ood_mass = 0.0;
  double eval_return_mean = 0.0;
  double eval_return_std = 0.0;
};

struct TrainDiagnostics {
  std::vector<DiagnosticRecord> records;

  static constexpr std::string_view kCsvHeader =
      "iteration,actor_loss,critic_loss,odaf_penalty,ood_mass,eval_return_mean,eval_return_std";
  std::string to_csv() const;
};

/// NaN or infinity in a loss. The message carries the iteration and the last losses.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything the actor loss reads besides the policy itself.
struct ActorContext {
  const EmpiricalDynamics* dyn = nullptr;
  const TransitionDataset* dataset = nullptr;
  const Geometry* geometry = nullptr;
  /// Sorted perturbation neighborhoods per state; computed from `geometry` when null.
  const std::vector<std::vector<int>>* neighborhoods = nullptr;
  /// min_j Q'_j(s,a), [s][a] row-major.
  std::span<const double> min_target;
  /// outcome_costs() under the current uncertainty table; read only by the odaf term.
  std::span<const double> outcome_cost;
  double entropy_coef = 0.0;
  double beta_odaf = 0.0;
  /// Multiplies the unitless baseline penalties (mass, total variation,
  /// cross-entropy) to bring them to value units; the odaf term already is.
  double baseline_scale = 1.0;
  int radius = 1;
  Regularizer regularizer = Regularizer::odaf;
};

/// Additive pieces of the actor loss, each averaged over the batch states.
struct ActorLossTerms {
  /// -E[min_j Q'_j].
  double value = 0.0;
  /// E[beta * log pi].
  double entropy = 0.0;
  /// Mean penalty of the configured regularizer (baselines times baseline_scale),
  /// before scaling by beta_odaf.
  double regularizer = 0.0;
  double total = 0.0;
};

/// Per-state costs c(s,a) = sum_s' P-hat(s'|s,a) U(s'); rows flagged fallback cost u_max.
std::vector<double> outcome_costs(const EmpiricalDynamics& dyn, std::span<const double> state_uncertainty,
                                  double u_max);

/// L_odaf(s): worst case over the perturbation neighborhood of sum_a pi(a|s^) c(s^,a).
double odaf_penalty(const SoftmaxPolicy& policy, const SoftmaxPolicy& eval_policy, const EmpiricalDynamics& dyn,
                    const QEnsemble& ensemble, const Geometry& geometry, int state, int radius, double u_max);

/// Sum of pi mass on actions never taken at `state` in the dataset.
double regularizer_action_support(const SoftmaxPolicy& policy, const TransitionDataset& dataset, int state);
/// Total variation between P(.|s,pi) and the dataset's next-state distribution from s.
double regularizer_state_recovery(const SoftmaxPolicy& policy, const EmpiricalDynamics& dyn,
                                  const TransitionDataset& dataset, int state);
/// Cross-entropy of pi against the empirical behavior policy, log clipped at p_min.
double regularizer_behavior_clone(const SoftmaxPolicy& policy, const TransitionDataset& dataset, int state);
inline constexpr double kCloneMinProb = 1e-8;

/// E_{P-hat(.|s,a)} U^{pi'}(s'); fallback rows score u_max.
double validation_score(const EmpiricalDynamics& dyn, const QEnsemble& ensemble, const SoftmaxPolicy& eval_policy,
                        int state, int action, double u_max);

/// Actor loss on a batch of states. When `grad` is non-empty it receives the
/// exact gradient with respect to every logit (same layout as all_logits).
/// The state_recovery and behavior_clone penalties are zero at states the
/// dataset never acted from.
ActorLossTerms actor_loss(const SoftmaxPolicy& policy, const ActorContext& ctx, std::span<const int> states,
                          std::span<double> grad = {});

/// Adam moments for the logits.
struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One gradient step on the logits: plain when `adam` is null, Adam otherwise.
/// Returns the loss before the step.
double actor_step(SoftmaxPolicy& policy, const ActorContext& ctx, std::span<const int> states, double learning_rate,
                  AdamState* adam = nullptr);

/// beta_u * R_max / (1 - gamma), with R_max the largest |r| in the dataset.
double uncertainty_ceiling(const TransitionDataset& dataset, double beta_u, double discount);

struct TrainResult {
  SoftmaxPolicy policy;
  SoftmaxPolicy eval_policy;
  QEnsemble ensemble;
  EmpiricalDynamics dynamics;
  TrainDiagnostics diagnostics;
  double u_max = 0.0;
};

/// Alternating critic and actor updates on a tabular problem. Deterministic in config.seed.
TrainResult train(const TrainConfig& config, const TransitionDataset& dataset, const Environment& env);

}  // namespace odaf
