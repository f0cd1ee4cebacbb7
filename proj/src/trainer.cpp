#include "odaf/trainer.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "odaf/errors.hpp"
#include "odaf/evaluation.hpp"

namespace odaf {

namespace {

constexpr std::string_view kRegularizerNames[] = {"none", "odaf", "action_support", "state_recovery",
                                                   "behavior_clone"};

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return std::string(s.substr(begin, end - begin + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument("invalid value '" + text + "' for " + key);
  return value;
}

std::string join_keys() {
  std::string out;
  for (const auto& k : TrainConfig::keys()) out += (out.empty() ? "" : ", ") + k;
  return out;
}

std::string_view model_critic_name(ModelCritic m) {
  switch (m) {
    case ModelCritic::automatic: return "auto";
    case ModelCritic::on: return "on";
    case ModelCritic::off: return "off";
  }
  return "auto";
}

/// Gradient of sum_a pi_a c_a with respect to the logits of one state.
void add_linear_grad(std::span<double> grad_row, std::span<const double> pi, std::span<const double> c, double scale) {
  double mean = 0.0;
  for (std::size_t a = 0; a < pi.size(); ++a) mean += pi[a] * c[a];
  for (std::size_t a = 0; a < pi.size(); ++a) grad_row[a] += scale * pi[a] * (c[a] - mean);
}

std::vector<double> state_uncertainties(const QEnsemble& ensemble, const SoftmaxPolicy& eval_policy) {
  std::vector<double> out(static_cast<std::size_t>(ensemble.num_states()));
  std::vector<double> probs(static_cast<std::size_t>(ensemble.num_actions()));
  for (int s = 0; s < ensemble.num_states(); ++s) {
    eval_policy.probs(s, probs);
    out[static_cast<std::size_t>(s)] = ensemble.state_uncertainty(probs, s);
  }
  return out;
}

/// Penalty value and, when `grad_row` is non-empty, its gradient at `state`.
double state_recovery_term(std::span<const double> pi, const EmpiricalDynamics& dyn, const TransitionDataset& dataset,
                           int state, std::span<double> grad_row, double scale) {
  const int n = dataset.count_s(state);
  if (n == 0) throw SupportError("state " + std::to_string(state) + " was never visited in the dataset", state);
  // diff = P(.|s,pi) - empirical next-state distribution, kept dense with a touched list
  thread_local std::vector<double> diff;
  thread_local std::vector<int> touched;
  diff.assign(static_cast<std::size_t>(dyn.num_states()), 0.0);
  touched.clear();
  const auto add = [&](int next, double v) {
    auto& d = diff[static_cast<std::size_t>(next)];
    if (d == 0.0) touched.push_back(next);
    d += v;
  };
  for (int a = 0; a < dataset.num_actions(); ++a) {
    for (const auto& [next, count] : dataset.next_counts(state, a)) add(next, -static_cast<double>(count) / n);
  }
  for (int a = 0; a < dyn.num_actions(); ++a) {
    for (const auto& o : dyn.row(state, a)) add(o.state, pi[static_cast<std::size_t>(a)] * o.prob);
  }
  std::sort(touched.begin(), touched.end());
  touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
  double tv = 0.0;
  for (int next : touched) tv += std::abs(diff[static_cast<std::size_t>(next)]);
  tv *= 0.5;
  if (!grad_row.empty()) {
    std::vector<double> c(pi.size(), 0.0);
    for (int a = 0; a < dyn.num_actions(); ++a) {
      for (const auto& o : dyn.row(state, a)) {
        const double d = diff[static_cast<std::size_t>(o.state)];
        const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        c[static_cast<std::size_t>(a)] += 0.5 * sign * o.prob;
      }
    }
    add_linear_grad(grad_row, pi, c, scale);
  }
  return tv;
}

double behavior_clone_term(std::span<const double> pi, const TransitionDataset& dataset, int state,
                           std::span<double> grad_row, double scale) {
  const auto behavior = dataset.behavior_policy(state);
  double loss = 0.0;
  for (std::size_t a = 0; a < pi.size(); ++a) {
    if (behavior[a] == 0.0) continue;
    loss -= behavior[a] * std::log(std::max(pi[a], kCloneMinProb));
    if (!grad_row.empty() && pi[a] > kCloneMinProb) {
      for (std::size_t b = 0; b < pi.size(); ++b) grad_row[b] += scale * behavior[a] * (pi[b] - (a == b ? 1.0 : 0.0));
    }
  }
  return loss;
}

double action_support_term(std::span<const double> pi, const TransitionDataset& dataset, int state,
                           std::span<double> grad_row, double scale) {
  std::vector<double> unseen(pi.size());
  double mass = 0.0;
  for (std::size_t a = 0; a < pi.size(); ++a) {
    unseen[a] = dataset.in_pair_support(state, static_cast<int>(a)) ? 0.0 : 1.0;
    mass += pi[a] * unseen[a];
  }
  if (!grad_row.empty()) add_linear_grad(grad_row, pi, unseen, scale);
  return mass;
}

}  // namespace

std::string_view regularizer_name(Regularizer r) { return kRegularizerNames[static_cast<int>(r)]; }

Regularizer parse_regularizer(std::string_view name) {
  for (int i = 0; i < 5; ++i) {
    if (kRegularizerNames[i] == name) return static_cast<Regularizer>(i);
  }
  throw std::invalid_argument("unknown regularizer '" + std::string(name) +
                              "' (expected none, odaf, action_support, state_recovery, behavior_clone)");
}

// ---------------------------------------------------------------------------
// TrainConfig

void TrainConfig::validate() const {
  const auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("TrainConfig: ") + what);
  };
  require(iterations >= 0, "iterations must be non-negative");
  require(batch_size >= 1, "batch_size must be at least 1");
  require(actor_lr > 0.0, "actor_lr must be positive");
  require(critic_lr > 0.0, "critic_lr must be positive");
  require(k >= 2, "k must be at least 2");
  require(tau > 0.0 && tau <= 1.0, "tau must lie in (0,1]");
  require(beta_u > 0.0, "beta_u must be positive");
  require(entropy_coef >= 0.0, "entropy_coef must be non-negative");
  require(beta_odaf >= 0.0, "beta_odaf must be non-negative");
  require(perturb_radius >= 0, "perturb_radius must be non-negative");
  require(smoothing >= 0.0, "smoothing must be non-negative");
  require(eval_every >= 1, "eval_every must be at least 1");
  require(eval_episodes >= 1, "eval_episodes must be at least 1");
  require(init_scale >= 0.0, "init_scale must be non-negative");
  require(mask_prob > 0.0 && mask_prob <= 1.0, "mask_prob must lie in (0,1]");
}

bool TrainConfig::uses_model_critic() const {
  switch (model_critic) {
    case ModelCritic::on: return true;
    case ModelCritic::off: return false;
    case ModelCritic::automatic:
      return regularizer == Regularizer::odaf || regularizer == Regularizer::state_recovery;
  }
  return false;
}

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> k{
      "iterations", "batch_size", "actor_lr",      "critic_lr",     "k",          "tau",
      "beta_u",     "entropy_coef", "beta_odaf",   "perturb_radius", "regularizer", "smoothing",
      "seed",       "eval_every", "eval_episodes", "init_scale",    "mask_prob",  "model_critic"};
  return k;
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "iterations") iterations = parse_number<int>(key, value);
  else if (key == "batch_size") batch_size = parse_number<int>(key, value);
  else if (key == "actor_lr") actor_lr = parse_number<double>(key, value);
  else if (key == "critic_lr") critic_lr = parse_number<double>(key, value);
  else if (key == "k") k = parse_number<int>(key, value);
  else if (key == "tau") tau = parse_number<double>(key, value);
  else if (key == "beta_u") beta_u = parse_number<double>(key, value);
  else if (key == "entropy_coef") entropy_coef = parse_number<double>(key, value);
  else if (key == "beta_odaf") beta_odaf = parse_number<double>(key, value);
  else if (key == "perturb_radius") perturb_radius = parse_number<int>(key, value);
  else if (key == "regularizer") regularizer = parse_regularizer(value);
  else if (key == "smoothing") smoothing = parse_number<double>(key, value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "eval_every") eval_every = parse_number<int>(key, value);
  else if (key == "eval_episodes") eval_episodes = parse_number<int>(key, value);
  else if (key == "init_scale") init_scale = parse_number<double>(key, value);
  else if (key == "mask_prob") mask_prob = parse_number<double>(key, value);
  else if (key == "model_critic") {
    if (value == "auto") model_critic = ModelCritic::automatic;
    else if (value == "on") model_critic = ModelCritic::on;
    else if (value == "off") model_critic = ModelCritic::off;
    else throw std::invalid_argument("invalid value '" + value + "' for model_critic (expected auto, on, off)");
  } else {
    throw std::invalid_argument("unknown config key '" + key + "'; valid keys: " + join_keys());
  }
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  return {{"iterations", std::to_string(iterations)},
          {"batch_size", std::to_string(batch_size)},
          {"actor_lr", format_double(actor_lr)},
          {"critic_lr", format_double(critic_lr)},
          {"k", std::to_string(k)},
          {"tau", format_double(tau)},
          {"beta_u", format_double(beta_u)},
          {"entropy_coef", format_double(entropy_coef)},
          {"beta_odaf", format_double(beta_odaf)},
          {"perturb_radius", std::to_string(perturb_radius)},
          {"regularizer", std::string(regularizer_name(regularizer))},
          {"smoothing", format_double(smoothing)},
          {"seed", std::to_string(seed)},
          {"eval_every", std::to_string(eval_every)},
          {"eval_episodes", std::to_string(eval_episodes)},
          {"init_scale", format_double(init_scale)},
          {"mask_prob", format_double(mask_prob)},
          {"model_critic", std::string(model_critic_name(model_critic))}};
}

nlohmann::json TrainConfig::to_json() const {
  return {{"iterations", iterations},
          {"batch_size", batch_size},
          {"actor_lr", actor_lr},
          {"critic_lr", critic_lr},
          {"k", k},
          {"tau", tau},
          {"beta_u", beta_u},
          {"entropy_coef", entropy_coef},
          {"beta_odaf", beta_odaf},
          {"perturb_radius", perturb_radius},
          {"regularizer", regularizer_name(regularizer)},
          {"smoothing", smoothing},
          {"seed", seed},
          {"eval_every", eval_every},
          {"eval_episodes", eval_episodes},
          {"init_scale", init_scale},
          {"mask_prob", mask_prob},
          {"model_critic", model_critic_name(model_critic)}};
}

TrainConfig parse_config(std::string_view text, std::map<std::string, std::string>* extra) {
  TrainConfig config;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (key.empty()) throw ParseError("missing key before '='", line_no);
    if (!seen.insert(key).second) throw ParseError("duplicate key '" + key + "'", line_no);
    const auto& keys = TrainConfig::keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end() && extra != nullptr) {
      (*extra)[key] = value;
      continue;
    }
    try {
      config.set(key, value);
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), line_no);
    }
  }
  config.validate();
  return config;
}

TrainConfig load_config(const std::filesystem::path& path, std::map<std::string, std::string>* extra) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str(), extra);
}

std::string TrainDiagnostics::to_csv() const {
  std::string out(kCsvHeader);
  out += '\n';
  for (const auto& r : records) {
    out += std::to_string(r.iteration);
    for (double v : {r.actor_loss, r.critic_loss, r.odaf_penalty, r.ood_mass, r.eval_return_mean, r.eval_return_std}) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses

std::vector<double> outcome_costs(const EmpiricalDynamics& dyn, std::span<const double> state_uncertainty,
                                  double u_max) {
  const int S = dyn.num_states();
  const int A = dyn.num_actions();
  std::vector<double> cost(static_cast<std::size_t>(S) * static_cast<std::size_t>(A));
  for (int s = 0; s < S; ++s) {
    for (int a = 0; a < A; ++a) {
      double c = 0.0;
      if (dyn.is_fallback(s, a)) {
        c = u_max;
      } else {
        for (const auto& o : dyn.row(s, a)) c += o.prob * state_uncertainty[static_cast<std::size_t>(o.state)];
      }
      cost[static_cast<std::size_t>(s) * A + a] = c;
    }
  }
  return cost;
}

double odaf_penalty(const SoftmaxPolicy& policy, const SoftmaxPolicy& eval_policy, const EmpiricalDynamics& dyn,
                    const QEnsemble& ensemble, const Geometry& geometry, int state, int radius, double u_max) {
  const auto u = state_uncertainties(ensemble, eval_policy);
  const int A = dyn.num_actions();
  auto neighbors = geometry.neighborhood(state, radius);
  std::sort(neighbors.begin(), neighbors.end());
  double best = -std::numeric_limits<double>::infinity();
  for (int n : neighbors) {
    const auto pi = policy.probs(n);
    double value = 0.0;
    for (int a = 0; a < A; ++a) {
      double c = 0.0;
      if (dyn.is_fallback(n, a)) {
        c = u_max;
      } else {
        for (const auto& o : dyn.row(n, a)) c += o.prob * u[static_cast<std::size_t>(o.state)];
      }
      value += pi[static_cast<std::size_t>(a)] * c;
    }
    best = std::max(best, value);
  }
  return best;
}

double regularizer_action_support(const SoftmaxPolicy& policy, const TransitionDataset& dataset, int state) {
  return action_support_term(policy.probs(state), dataset, state, {}, 0.0);
}

double regularizer_state_recovery(const SoftmaxPolicy& policy, const EmpiricalDynamics& dyn,
                                  const TransitionDataset& dataset, int state) {
  return state_recovery_term(policy.probs(state), dyn, dataset, state, {}, 0.0);
}

double regularizer_behavior_clone(const SoftmaxPolicy& policy, const TransitionDataset& dataset, int state) {
  return behavior_clone_term(policy.probs(state), dataset, state, {}, 0.0);
}

double validation_score(const EmpiricalDynamics& dyn, const QEnsemble& ensemble, const SoftmaxPolicy& eval_policy,
                        int state, int action, double u_max) {
  if (dyn.is_fallback(state, action)) return u_max;
  double score = 0.0;
  for (const auto& o : dyn.row(state, action)) score += o.prob * ensemble.state_uncertainty(eval_policy, o.state);
  return score;
}

ActorLossTerms actor_loss(const SoftmaxPolicy& policy, const ActorContext& ctx, std::span<const int> states,
                          std::span<double> grad) {
  ActorLossTerms terms;
  if (states.empty()) return terms;
  const int A = policy.num_actions();
  const auto uA = static_cast<std::size_t>(A);
  const bool want_grad = !grad.empty();
  if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);
  const auto grad_row = [&](int s) {
    return want_grad ? grad.subspan(static_cast<std::size_t>(s) * uA, uA) : std::span<double>{};
  };
  const double w = 1.0 / static_cast<double>(states.size());
  const double beta = ctx.entropy_coef;
  const double reg_scale = w * ctx.beta_odaf;
  const double base_scale = reg_scale * ctx.baseline_scale;
  const double base_w = w * ctx.baseline_scale;
  std::vector<double> pi(uA);
  std::vector<double> h(uA);
  std::vector<double> neighbor_pi(uA);

  for (int s : states) {
    policy.probs(s, pi);
    double mean_h = 0.0;
    for (std::size_t a = 0; a < uA; ++a) {
      const double q = ctx.min_target[static_cast<std::size_t>(s) * uA + a];
      const double log_p = std::log(pi[a]);
      terms.value -= w * pi[a] * q;
      terms.entropy += w * beta * pi[a] * log_p;
      h[a] = q - beta * log_p;
      mean_h += pi[a] * h[a];
    }
    if (want_grad) {
      auto row = grad_row(s);
      for (std::size_t b = 0; b < uA; ++b) row[b] -= w * pi[b] * (h[b] - mean_h);
    }

    switch (ctx.regularizer) {
      case Regularizer::none: break;
      case Regularizer::odaf: {
        std::vector<int> local;
        const std::vector<int>* neighbors = nullptr;
        if (ctx.neighborhoods != nullptr) {
          neighbors = &(*ctx.neighborhoods)[static_cast<std::size_t>(s)];
        } else {
          local = ctx.geometry->neighborhood(s, ctx.radius);
          std::sort(local.begin(), local.end());
          neighbors = &local;
        }
        double best = -std::numeric_limits<double>::infinity();
        int arg = s;
        for (int n : *neighbors) {
          policy.probs(n, neighbor_pi);
          double value = 0.0;
          for (std::size_t a = 0; a < uA; ++a) value += neighbor_pi[a] * ctx.outcome_cost[static_cast<std::size_t>(n) * uA + a];
          if (value > best) {
            best = value;
            arg = n;
          }
        }
        terms.regularizer += w * best;
        if (want_grad) {
          policy.probs(arg, neighbor_pi);
          add_linear_grad(grad_row(arg), neighbor_pi, ctx.outcome_cost.subspan(static_cast<std::size_t>(arg) * uA, uA),
                          reg_scale);
        }
        break;
      }
      case Regularizer::action_support:
        terms.regularizer += base_w * action_support_term(pi, *ctx.dataset, s, grad_row(s), base_scale);
        break;
      case Regularizer::state_recovery:
        // no recorded behavior to align with at states only seen as next states
        if (ctx.dataset->count_s(s) == 0) break;
        terms.regularizer += base_w * state_recovery_term(pi, *ctx.dyn, *ctx.dataset, s, grad_row(s), base_scale);
        break;
      case Regularizer::behavior_clone:
        if (ctx.dataset->count_s(s) == 0) break;
        terms.regularizer += base_w * behavior_clone_term(pi, *ctx.dataset, s, grad_row(s), base_scale);
        break;
    }
  }
  terms.total = terms.value + terms.entropy + ctx.beta_odaf * terms.regularizer;
  return terms;
}

double actor_step(SoftmaxPolicy& policy, const ActorContext& ctx, std::span<const int> states, double learning_rate,
                  AdamState* adam) {
  std::vector<double> grad(policy.all_logits().size());
  const auto terms = actor_loss(policy, ctx, states, grad);
  auto& logits = policy.all_logits();
  if (adam == nullptr) {
    for (std::size_t i = 0; i < logits.size(); ++i) logits[i] -= learning_rate * grad[i];
    return terms.total;
  }
  if (adam->m.size() != logits.size()) {
    adam->m.assign(logits.size(), 0.0);
    adam->v.assign(logits.size(), 0.0);
    adam->step = 0;
  }
  ++adam->step;
  const double c1 = 1.0 - std::pow(adam->beta1, static_cast<double>(adam->step));
  const double c2 = 1.0 - std::pow(adam->beta2, static_cast<double>(adam->step));
  for (std::size_t i = 0; i < logits.size(); ++i) {
    adam->m[i] = adam->beta1 * adam->m[i] + (1.0 - adam->beta1) * grad[i];
    adam->v[i] = adam->beta2 * adam->v[i] + (1.0 - adam->beta2) * grad[i] * grad[i];
    logits[i] -= learning_rate * (adam->m[i] / c1) / (std::sqrt(adam->v[i] / c2) + adam->epsilon);
  }
  return terms.total;
}

double uncertainty_ceiling(const TransitionDataset& dataset, double beta_u, double discount) {
  double r_max = 0.0;
  for (const auto& t : dataset.transitions()) r_max = std::max(r_max, std::abs(t.reward));
  return beta_u * r_max / (1.0 - discount);
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

struct Trainer {
  const TrainConfig& config;
  const TransitionDataset& dataset;
  const Environment& env;
  TrainResult result;
  std::vector<std::vector<int>> neighborhoods;
  std::vector<int> visited;
  std::vector<bool> absorbing;
  std::vector<double> min_target;
  std::vector<double> costs;
  double value_scale = 1.0;

  Trainer(const TrainConfig& c, const TransitionDataset& d, const Environment& e) : config(c), dataset(d), env(e) {}

  void refresh_tables() {
    const int S = dataset.num_states();
    const int A = dataset.num_actions();
    min_target.resize(static_cast<std::size_t>(S) * static_cast<std::size_t>(A));
    for (int s = 0; s < S; ++s) {
      for (int a = 0; a < A; ++a) min_target[static_cast<std::size_t>(s) * A + a] = result.ensemble.min_target(s, a);
    }
    if (config.regularizer == Regularizer::odaf) {
      costs = outcome_costs(result.dynamics, state_uncertainties(result.ensemble, result.eval_policy), result.u_max);
    }
  }

  ActorContext context() const {
    ActorContext ctx;
    ctx.dyn = &result.dynamics;
    ctx.dataset = &dataset;
    ctx.geometry = &env.geometry;
    ctx.neighborhoods = &neighborhoods;
    ctx.min_target = min_target;
    ctx.outcome_cost = costs;
    ctx.entropy_coef = config.entropy_coef;
    ctx.beta_odaf = config.beta_odaf;
    ctx.baseline_scale = value_scale;
    ctx.radius = config.perturb_radius;
    ctx.regularizer = config.regularizer;
    return ctx;
  }

  DiagnosticRecord record(int iteration, double actor, double critic) {
    DiagnosticRecord r;
    r.iteration = iteration;
    r.actor_loss = actor;
    r.critic_loss = critic;
    const auto ctx = context();
    double ood = 0.0;
    for (int s : visited) ood += ood_mass(result.dynamics, s, result.policy);
    r.ood_mass = ood / static_cast<double>(visited.size());
    if (config.regularizer == Regularizer::odaf) {
      r.odaf_penalty = config.beta_odaf * actor_loss(result.policy, ctx, visited).regularizer;
    }
    const auto eval = evaluate(result.policy, env.mdp, config.eval_episodes, env.horizon,
                               mix_seed(config.seed, 4 + static_cast<std::uint64_t>(iteration)));
    r.eval_return_mean = eval.return_mean;
    r.eval_return_std = eval.return_std;
    return r;
  }

  void check_finite(int iteration, double actor, double critic) const {
    if (std::isfinite(actor) && std::isfinite(critic)) return;
    std::ostringstream msg;
    msg << "non-finite loss at iteration " << iteration << " (actor_loss=" << actor << ", critic_loss=" << critic
        << ", regularizer=" << regularizer_name(config.regularizer) << ", seed=" << config.seed << ")";
    throw TrainingError(msg.str());
  }

  void run() {
    const int S = dataset.num_states();
    const int A = dataset.num_actions();
    DynamicsOptions options;
    options.smoothing = config.smoothing;
    options.outcome_geometry = env.geometry;
    result.dynamics = EmpiricalDynamics::fit(dataset, options);

    double r_max = 0.0;
    for (const auto& t : dataset.transitions()) r_max = std::max(r_max, std::abs(t.reward));
    value_scale = r_max / (1.0 - env.mdp.discount);
    EnsembleParams params;
    params.k = config.k;
    params.beta_u = config.beta_u;
    params.tau = config.tau;
    params.learning_rate = config.critic_lr;
    params.init_spread = config.init_scale * value_scale;
    params.discount = env.mdp.discount;
    params.mask_prob = config.mask_prob;
    result.ensemble = QEnsemble(S, A, params, mix_seed(config.seed, 1));
    absorbing.assign(static_cast<std::size_t>(S), false);
    for (int s : dataset.terminal_states()) {
      result.ensemble.pin_state(s);
      absorbing[static_cast<std::size_t>(s)] = true;
    }
    result.policy = SoftmaxPolicy(S, A);
    result.eval_policy = SoftmaxPolicy(S, A);
    result.u_max = uncertainty_ceiling(dataset, config.beta_u, env.mdp.discount);

    neighborhoods.resize(static_cast<std::size_t>(S));
    for (int s = 0; s < S; ++s) {
      if (env.geometry.is_wall(s)) continue;
      auto n = env.geometry.neighborhood(s, config.perturb_radius);
      std::sort(n.begin(), n.end());
      neighborhoods[static_cast<std::size_t>(s)] = std::move(n);
    }
    visited = dataset.visited_states();

    refresh_tables();
    {
      const auto ctx = context();
      std::vector<int> weighted;
      weighted.reserve(dataset.size());
      for (const auto& t : dataset.transitions()) weighted.push_back(t.state);
      const double actor = actor_loss(result.policy, ctx, weighted).total;
      const double critic = result.ensemble.td_loss(dataset.transitions(), result.policy, config.entropy_coef);
      check_finite(0, actor, critic);
      result.diagnostics.records.push_back(record(0, actor, critic));
    }

    const bool model_critic = config.uses_model_critic();
    Rng batch_rng(mix_seed(config.seed, 2));
    Rng model_rng(mix_seed(config.seed, 3));
    std::vector<Transition> batch;
    std::vector<int> states;
    std::vector<bool> in_batch(static_cast<std::size_t>(S), false);
    AdamState adam;
    for (int it = 1; it <= config.iterations; ++it) {
      batch.clear();
      states.clear();
      for (int i = 0; i < config.batch_size; ++i) {
        const auto& t = dataset[batch_rng.index(dataset.size())];
        batch.push_back(t);
        states.push_back(t.state);
      }
      // next states belong to the data's state support too; training the actor there
      // covers states where episodes were cut before any action was recorded
      for (int i = 0; i < config.batch_size; ++i) {
        if (!batch[static_cast<std::size_t>(i)].done) states.push_back(batch[static_cast<std::size_t>(i)].next_state);
      }
      if (model_critic) {
        // one imagined step for each unseen action at each distinct batch state
        for (int s : states) {
          if (in_batch[static_cast<std::size_t>(s)]) continue;
          in_batch[static_cast<std::size_t>(s)] = true;
          for (int a = 0; a < A; ++a) {
            if (result.dynamics.kind(s, a) != RowKind::predicted) continue;
            const auto row = result.dynamics.row(s, a);
            int next = row.back().state;
            double u = model_rng.uniform();
            for (const auto& o : row) {
              if (u < o.prob) {
                next = o.state;
                break;
              }
              u -= o.prob;
            }
            batch.push_back({s, a, result.dynamics.reward(s, a), next, absorbing[static_cast<std::size_t>(next)]});
          }
        }
        for (int s : states) in_batch[static_cast<std::size_t>(s)] = false;
      }

      const double critic = result.ensemble.td_update(batch, result.policy, config.entropy_coef);
      refresh_tables();
      const double actor = actor_step(result.policy, context(), states, config.actor_lr, &adam);
      check_finite(it, actor, critic);
      result.ensemble.soft_update();
      result.eval_policy.soft_update_from(result.policy, config.tau);

      if (it % config.eval_every == 0 || it == config.iterations) {
        refresh_tables();
        result.diagnostics.records.push_back(record(it, actor, critic));
      }
    }
  }
};

}  // namespace

TrainResult train(const TrainConfig& config, const TransitionDataset& dataset, const Environment& env) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("train: dataset is empty");
  if (dataset.num_states() != env.mdp.num_states || dataset.num_actions() != env.mdp.num_actions) {
    throw std::invalid_argument("train: dataset dimensions do not match the environment");
  }
  Trainer trainer(config, dataset, env);
  trainer.run();
  return std::move(trainer.result);
}

}  // namespace odaf
