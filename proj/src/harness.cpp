#include "odaf/harness.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "odaf/operators.hpp"

namespace odaf {

namespace {

constexpr int kStitchEpisodesPerFamily = 10;
constexpr int kMixPoolEpisodes = 20;
constexpr std::uint64_t kExpertPoolSeed = 11;
constexpr std::uint64_t kRandomPoolSeed = 12;
constexpr int kRandomBaselineEpisodes = 1000;
constexpr int kPartialEpisodes = 5;
// slips into unvisited cells are rare but costly, so the estimate needs many episodes
constexpr int kPartialEvalEpisodes = 2000;

double median(std::vector<double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

double mean(const std::vector<double>& xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (double x : xs) total += x;
  return total / static_cast<double>(xs.size());
}

/// At least 80% of the seeds, rounded up.
std::size_t required_count(std::size_t seeds) { return (4 * seeds + 4) / 5; }

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

int count_ood_pairs(const std::vector<Transition>& trajectory, const TransitionDataset& dataset) {
  int n = 0;
  for (const auto& t : trajectory) {
    if (!dataset.in_pair_support(t.state, t.action)) ++n;
  }
  return n;
}

/// Trains one cell and fills everything but `extra`.
RunRecord train_and_evaluate(const std::string& method, const TrainConfig& config, const TransitionDataset& dataset,
                             const Environment& env, int eval_episodes) {
  RunRecord run;
  run.method = method;
  run.environment = env.name;
  run.seed = config.seed;
  run.config = config;
  auto trained = train(config, dataset, env);
  run.eval = evaluate(trained.policy, env.mdp, eval_episodes, env.horizon, mix_seed(config.seed, 5));
  run.trajectory = greedy_trajectory(trained.policy, env.mdp, env.horizon, mix_seed(config.seed, 6));
  run.ood_pairs = count_ood_pairs(run.trajectory, dataset);
  run.extra["expected_return"] = expected_greedy_return(trained.policy, env.mdp, env.horizon);
  if (env.maze && env.name == "stitching") run.eval.stitched = is_stitched(run.trajectory, *env.maze);
  run.diagnostics = std::move(trained.diagnostics);
  return run;
}

SoftmaxPolicy oracle_policy(const TabularMdp& mdp) {
  return SoftmaxPolicy::near_deterministic(mdp.num_actions, oracle_value_iteration(mdp).greedy_policy());
}

nlohmann::json dataset_stats(const TransitionDataset& dataset) {
  const auto returns = dataset.episode_returns();
  return {{"transitions", dataset.size()},
          {"episodes", returns.size()},
          {"state_support", dataset.state_support().size()},
          {"mean_return", mean(returns)},
          {"max_return", returns.empty() ? 0.0 : *std::max_element(returns.begin(), returns.end())}};
}

CheckResult make_check(std::string name, bool pass, std::string detail, nlohmann::json data = nlohmann::json::object()) {
  CheckResult c;
  c.name = std::move(name);
  c.pass = pass;
  c.detail = std::move(detail);
  c.data = std::move(data);
  return c;
}

std::string fraction(std::size_t hits, std::size_t total) {
  return std::to_string(hits) + "/" + std::to_string(total);
}

std::vector<MethodSpec> methods_with(const TrainConfig& base, std::initializer_list<Regularizer> regs) {
  std::vector<MethodSpec> out;
  for (auto r : regs) {
    MethodSpec m{std::string(regularizer_name(r)), base};
    m.config.regularizer = r;
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Records and output

void ExperimentSpec::validate() const {
  if (seeds.empty()) throw std::invalid_argument("experiment " + name + ": at least one seed is required");
  std::set<std::string> names;
  for (const auto& m : methods) {
    if (!names.insert(m.name).second) throw std::invalid_argument("experiment " + name + ": duplicate method " + m.name);
    m.config.validate();
  }
}

nlohmann::json ExperimentSpec::to_json() const {
  nlohmann::json methods_json = nlohmann::json::array();
  for (const auto& m : methods) methods_json.push_back({{"name", m.name}, {"config", m.config.to_json()}});
  return {{"name", name},
          {"environment", environment},
          {"dataset_recipe", dataset_recipe},
          {"methods", methods_json},
          {"seeds", seeds},
          {"out_dir", out_dir.string()}};
}

std::string RunRecord::config_hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : config.to_json().dump()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string RunRecord::tag() const {
  std::string t = environment + "_" + method;
  if (extra.contains("ratio")) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "_r%.2f", extra["ratio"].get<double>());
    t += buf;
  }
  return t + "_seed" + std::to_string(seed);
}

nlohmann::json RunRecord::to_json() const {
  nlohmann::json traj = nlohmann::json::array();
  for (const auto& t : trajectory) traj.push_back({t.state, t.action, t.reward, t.next_state, t.done});
  return {{"method", method},
          {"environment", environment},
          {"seed", seed},
          {"config_hash", config_hash()},
          {"config", config.to_json()},
          {"eval", odaf::to_json(eval)},
          {"ood_pairs", ood_pairs},
          {"final_ood_mass", diagnostics.records.empty() ? 0.0 : diagnostics.records.back().ood_mass},
          {"trajectory", traj},
          {"extra", extra}};
}

nlohmann::json CheckResult::to_json() const {
  return {{"check", name}, {"pass", pass}, {"detail", detail}, {"seconds", seconds}, {"data", data}};
}

bool ExperimentResult::pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

nlohmann::json ExperimentResult::to_json() const {
  nlohmann::json runs_json = nlohmann::json::array();
  for (const auto& r : runs) runs_json.push_back(r.to_json());
  nlohmann::json checks_json = nlohmann::json::array();
  for (const auto& c : checks) checks_json.push_back(c.to_json());
  return {{"format", "odaf-experiment-v1"},
          {"spec", spec.to_json()},
          {"metadata", metadata},
          {"pass", pass()},
          {"checks", checks_json},
          {"runs", runs_json}};
}

std::vector<const RunRecord*> ExperimentResult::select(const std::string& method, const std::string& environment) const {
  std::vector<const RunRecord*> out;
  for (const auto& r : runs) {
    if (r.method == method && (environment.empty() || r.environment == environment)) out.push_back(&r);
  }
  std::stable_sort(out.begin(), out.end(), [](const RunRecord* a, const RunRecord* b) { return a->seed < b->seed; });
  return out;
}

void write_experiment(const ExperimentResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "diagnostics");
  const auto open = [](const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    return out;
  };
  {
    auto out = open(dir / "results.json");
    out << result.to_json().dump(2) << '\n';
  }
  {
    auto out = open(dir / "summary.csv");
    out << "environment,method,seed,ratio,return_mean,return_std,stitched,ood_pairs,final_ood_mass,normalized_score\n";
    for (const auto& r : result.runs) {
      out << r.environment << ',' << r.method << ',' << r.seed << ','
          << (r.extra.contains("ratio") ? format_double(r.extra["ratio"].get<double>()) : "") << ','
          << format_double(r.eval.return_mean) << ',' << format_double(r.eval.return_std) << ','
          << (r.eval.stitched ? (*r.eval.stitched ? "1" : "0") : "") << ',' << r.ood_pairs << ','
          << format_double(r.diagnostics.records.empty() ? 0.0 : r.diagnostics.records.back().ood_mass) << ','
          << (r.extra.contains("normalized_score") ? format_double(r.extra["normalized_score"].get<double>()) : "")
          << '\n';
    }
  }
  {
    auto out = open(dir / "trajectories.csv");
    out << "run,step,state,action,reward,next_state,done\n";
    for (const auto& r : result.runs) {
      for (std::size_t i = 0; i < r.trajectory.size(); ++i) {
        const auto& t = r.trajectory[i];
        out << r.tag() << ',' << i << ',' << t.state << ',' << t.action << ',' << format_double(t.reward) << ','
            << t.next_state << ',' << (t.done ? 1 : 0) << '\n';
      }
    }
  }
  for (const auto& r : result.runs) {
    auto out = open(dir / "diagnostics" / (r.tag() + ".csv"));
    out << r.diagnostics.to_csv();
  }
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& job) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads) : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next.store(n);
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

TransitionDataset partial_coverage_dataset(const Environment& env, int episodes, std::uint64_t seed) {
  return rollout(env.mdp, oracle_policy(env.mdp), episodes, env.horizon, mix_seed(seed, 77));
}

// ---------------------------------------------------------------------------
// Experiments

ExperimentResult run_stitching_experiment(const ExperimentOptions& options) {
  const auto env = parse_environment("stitching");
  ExperimentResult result;
  result.spec.name = "stitching";
  result.spec.environment = "stitching";
  result.spec.dataset_recipe = "make_stitching_dataset(episodes_per_family=" +
                               std::to_string(kStitchEpisodesPerFamily) + ", seed=<seed>)";
  result.spec.methods = methods_with(options.base, {Regularizer::odaf, Regularizer::action_support,
                                                    Regularizer::state_recovery, Regularizer::behavior_clone,
                                                    Regularizer::none});
  result.spec.seeds = options.seeds;
  result.spec.validate();

  std::vector<TransitionDataset> datasets;
  for (auto seed : options.seeds) datasets.push_back(make_stitching_dataset(*env.maze, kStitchEpisodesPerFamily, seed));

  // path returns of the two families and of the oracle
  const auto scripts = stitching_scripts();
  const auto detour = rollout(env.mdp, std::span<const int>(scripts.detour), 1, env.horizon, 0);
  const auto fragment = rollout(env.mdp, std::span<const int>(scripts.fragment), 1, env.horizon, 0);
  const double detour_return = detour.episode_returns().front();
  const double optimal_return = evaluate(oracle_policy(env.mdp), env.mdp, 1, env.horizon, 0).return_mean;
  result.metadata = {{"detour_return", detour_return},
                     {"fragment_return", fragment.episode_returns().front()},
                     {"optimal_return", optimal_return},
                     {"dataset", dataset_stats(datasets.front())},
                     {"paper_dataset_template", {{"mean_return", 40.7}, {"max_return", 71.8}}}};

  const std::size_t S = options.seeds.size();
  result.runs.resize(result.spec.methods.size() * S);
  parallel_for(result.runs.size(), options.threads, [&](std::size_t i) {
    const auto& method = result.spec.methods[i / S];
    TrainConfig config = method.config;
    config.seed = options.seeds[i % S];
    result.runs[i] = train_and_evaluate(method.name, config, datasets[i % S], env, config.eval_episodes);
  });

  const double dataset_max = result.metadata["dataset"]["max_return"].get<double>();
  const double detour_tol = detour_return + 0.05 * std::abs(detour_return);
  const auto count_if = [&](const std::string& method, auto pred) {
    std::size_t n = 0;
    for (const auto* r : result.select(method)) n += pred(*r) ? 1 : 0;
    return n;
  };
  const std::size_t need = required_count(S);

  const auto beats = count_if("odaf", [&](const RunRecord& r) { return r.eval.return_mean > dataset_max && r.ood_pairs >= 1; });
  result.checks.push_back(make_check("odaf_exceeds_dataset_max", beats >= need,
                                     fraction(beats, S) + " seeds with return > " + format_double(dataset_max) +
                                         " and an out-of-dataset pair on the greedy path"));
  const auto stitched = count_if("odaf", [](const RunRecord& r) { return r.eval.stitched.value_or(false); });
  result.checks.push_back(make_check("odaf_stitched", stitched >= need, fraction(stitched, S) + " seeds stitched"));
  for (const char* baseline : {"action_support", "behavior_clone"}) {
    const auto capped = count_if(baseline, [&](const RunRecord& r) { return r.eval.return_mean <= detour_tol; });
    result.checks.push_back(make_check(std::string(baseline) + "_at_most_detour", capped >= need,
                                       fraction(capped, S) + " seeds with return <= " + format_double(detour_tol)));
  }
  const auto in_support = count_if("action_support", [](const RunRecord& r) { return r.ood_pairs == 0; });
  result.checks.push_back(make_check("action_support_stays_in_dataset", in_support >= need,
                                     fraction(in_support, S) + " seeds whose greedy path only uses dataset pairs"));
  return result;
}

ExperimentResult run_mix_ratio_sweep(const ExperimentOptions& options, const std::vector<double>& ratios) {
  const auto env = parse_environment("open10");
  ExperimentResult result;
  result.spec.name = "mixratio";
  result.spec.environment = "open10";
  result.spec.dataset_recipe = "mix_datasets(expert=" + std::to_string(kMixPoolEpisodes) +
                               " oracle-greedy episodes, random=" + std::to_string(kMixPoolEpisodes) +
                               " uniform episodes, ratio, seed=<seed>)";
  result.spec.methods = methods_with(options.base, {Regularizer::odaf, Regularizer::action_support});
  result.spec.seeds = options.seeds;
  result.spec.validate();
  if (ratios.empty()) throw std::invalid_argument("run_mix_ratio_sweep: no ratios given");

  const auto oracle = oracle_policy(env.mdp);
  const SoftmaxPolicy uniform(env.mdp.num_states, env.mdp.num_actions);
  const auto expert = rollout(env.mdp, oracle, kMixPoolEpisodes, env.horizon, kExpertPoolSeed);
  const auto random = rollout(env.mdp, uniform, kMixPoolEpisodes, env.horizon, kRandomPoolSeed);
  const double oracle_return = evaluate(oracle, env.mdp, 1, env.horizon, 0).return_mean;
  const double random_return =
      evaluate(uniform, env.mdp, kRandomBaselineEpisodes, env.horizon, 0, ActionSelection::sample).return_mean;
  const double span = oracle_return - random_return;
  result.metadata = {{"ratios", ratios},
                     {"normalization",
                      {{"oracle_return", oracle_return},
                       {"random_return", random_return},
                       {"random_episodes", kRandomBaselineEpisodes}}},
                     {"expert_pool", dataset_stats(expert)},
                     {"random_pool", dataset_stats(random)}};

  const std::size_t S = options.seeds.size();
  const std::size_t M = result.spec.methods.size();
  result.runs.resize(ratios.size() * M * S);
  parallel_for(result.runs.size(), options.threads, [&](std::size_t i) {
    const double ratio = ratios[i / (M * S)];
    const auto& method = result.spec.methods[(i / S) % M];
    TrainConfig config = method.config;
    config.seed = options.seeds[i % S];
    const auto data = mix_datasets(expert, random, ratio, config.seed);
    auto run = train_and_evaluate(method.name, config, data, env, config.eval_episodes);
    run.extra["ratio"] = ratio;
    run.extra["normalized_score"] = 100.0 * (run.eval.return_mean - random_return) / span;
    result.runs[i] = std::move(run);
  });

  // curve table: one row per ratio, columns in ratio order
  std::map<std::string, std::vector<double>> medians;
  nlohmann::json curve = nlohmann::json::array();
  for (std::size_t r = 0; r < ratios.size(); ++r) {
    nlohmann::json row{{"ratio", ratios[r]}};
    for (std::size_t m = 0; m < M; ++m) {
      std::vector<double> scores;
      for (std::size_t k = 0; k < S; ++k) {
        scores.push_back(result.runs[(r * M + m) * S + k].extra["normalized_score"].get<double>());
      }
      const auto& name = result.spec.methods[m].name;
      medians[name].push_back(median(scores));
      row[name] = {{"scores", scores}, {"median", median(scores)}};
    }
    curve.push_back(row);
  }
  result.metadata["curve"] = curve;

  const auto at = [&](const std::string& method, double ratio) {
    for (std::size_t r = 0; r < ratios.size(); ++r) {
      if (std::abs(ratios[r] - ratio) < 1e-12) return medians[method][r];
    }
    return std::numeric_limits<double>::quiet_NaN();
  };
  const double odaf_hi = at("odaf", 0.9);
  const double as_hi = at("action_support", 0.9);
  if (!std::isnan(odaf_hi)) {
    result.checks.push_back(make_check("ratio_0.9_odaf_at_least_action_support", odaf_hi >= as_hi,
                                       "median " + format_double(odaf_hi) + " vs " + format_double(as_hi)));
  }
  const double odaf_lo = at("odaf", 0.5);
  const double as_lo = at("action_support", 0.5);
  if (!std::isnan(odaf_lo)) {
    result.checks.push_back(make_check("ratio_0.5_floor", odaf_lo >= 50.0 && as_lo >= 50.0,
                                       "medians " + format_double(odaf_lo) + ", " + format_double(as_lo)));
  }
  if (!std::isnan(odaf_lo) && !std::isnan(odaf_hi)) {
    result.checks.push_back(make_check("degradation_monotone", odaf_lo >= odaf_hi && as_lo >= as_hi,
                                       "odaf " + format_double(odaf_lo) + " -> " + format_double(odaf_hi) +
                                           ", action_support " + format_double(as_lo) + " -> " +
                                           format_double(as_hi)));
  }
  return result;
}

ExperimentResult run_ablation(const ExperimentOptions& options) {
  const auto stitching = parse_environment("stitching");
  const auto partial = parse_environment("partial10");
  ExperimentResult result;
  result.spec.name = "ablation";
  result.spec.environment = "stitching,partial10";
  result.spec.dataset_recipe = "stitching: make_stitching_dataset(" + std::to_string(kStitchEpisodesPerFamily) +
                               ", seed); partial10: " + std::to_string(kPartialEpisodes) +
                               " oracle-greedy episodes, seed mix_seed(seed, 77)";
  MethodSpec full{"odaf", options.base};
  full.config.regularizer = Regularizer::odaf;
  MethodSpec ablated{"odaf_no_penalty", full.config};
  ablated.config.beta_odaf = 0.0;
  result.spec.methods = {full, ablated};
  result.spec.seeds = options.seeds;
  result.spec.validate();

  const std::size_t S = options.seeds.size();
  const std::array<const Environment*, 2> envs{&stitching, &partial};
  std::vector<TransitionDataset> datasets;
  for (const auto* env : envs) {
    for (auto seed : options.seeds) {
      datasets.push_back(env == &stitching ? make_stitching_dataset(*env->maze, kStitchEpisodesPerFamily, seed)
                                           : partial_coverage_dataset(*env, kPartialEpisodes, seed));
    }
  }
  result.runs.resize(2 * 2 * S);
  parallel_for(result.runs.size(), options.threads, [&](std::size_t i) {
    const std::size_t e = i / (2 * S);
    const auto& method = result.spec.methods[(i / S) % 2];
    TrainConfig config = method.config;
    config.seed = options.seeds[i % S];
    const int episodes = envs[e] == &partial ? kPartialEvalEpisodes : config.eval_episodes;
    result.runs[i] = train_and_evaluate(method.name, config, datasets[e * S + i % S], *envs[e], episodes);
  });

  for (const auto* env : envs) {
    const auto on = result.select("odaf", env->name);
    const auto off = result.select("odaf_no_penalty", env->name);
    std::vector<double> diffs;
    std::vector<double> exact_diffs;
    std::vector<double> ood_on;
    std::vector<double> ood_off;
    bool penalty_zero = true;
    bool first_critic_equal = true;
    for (std::size_t k = 0; k < on.size(); ++k) {
      diffs.push_back(on[k]->eval.return_mean - off[k]->eval.return_mean);
      exact_diffs.push_back(on[k]->extra["expected_return"].get<double>() -
                            off[k]->extra["expected_return"].get<double>());
      ood_on.push_back(on[k]->diagnostics.records.back().ood_mass);
      ood_off.push_back(off[k]->diagnostics.records.back().ood_mass);
      for (const auto& rec : off[k]->diagnostics.records) penalty_zero = penalty_zero && rec.odaf_penalty == 0.0;
      first_critic_equal = first_critic_equal && on[k]->diagnostics.records.front().critic_loss ==
                                                     off[k]->diagnostics.records.front().critic_loss;
    }
    result.metadata[env->name] = {{"paired_differences", diffs},
                                  {"median_difference", median(diffs)},
                                  {"expected_return_differences", exact_diffs},
                                  {"final_ood_mass", {{"odaf", ood_on}, {"odaf_no_penalty", ood_off}}}};
    if (env == &partial) {
      result.checks.push_back(make_check("partial10_paired_median_positive", median(diffs) > 0.0,
                                         "median paired difference " + format_double(median(diffs))));
      result.checks.push_back(make_check("partial10_ood_mass_not_above_ablated", mean(ood_on) <= mean(ood_off),
                                         "mean final ood_mass " + format_double(mean(ood_on)) + " vs " +
                                             format_double(mean(ood_off))));
    }
    result.checks.push_back(make_check(env->name + "_ablated_penalty_zero", penalty_zero,
                                       "odaf_penalty column of the ablated arm"));
    result.checks.push_back(make_check(env->name + "_first_critic_loss_shared", first_critic_equal,
                                       "critic loss of the first record matches across arms"));
  }
  return result;
}

ExperimentResult run_validation_experiment(const ExperimentOptions& options) {
  const auto env = parse_environment("partial10");
  ExperimentResult result;
  result.spec.name = "validation";
  result.spec.environment = "partial10";
  result.spec.dataset_recipe =
      std::to_string(kPartialEpisodes) + " oracle-greedy episodes, seed mix_seed(seed, 77)";
  result.spec.methods = methods_with(options.base, {Regularizer::odaf});
  result.spec.seeds = options.seeds;
  result.spec.validate();

  const std::size_t S = options.seeds.size();
  result.runs.resize(S);
  parallel_for(S, options.threads, [&](std::size_t i) {
    TrainConfig config = result.spec.methods.front().config;
    config.seed = options.seeds[i];
    const auto data = partial_coverage_dataset(env, kPartialEpisodes, config.seed);
    auto trained = train(config, data, env);
    const auto terminal = data.terminal_states();
    std::vector<double> out_scores;
    std::vector<double> in_scores;
    for (int s : trained.dynamics.support_states()) {
      if (std::binary_search(terminal.begin(), terminal.end(), s)) continue;
      for (int a = 0; a < env.mdp.num_actions; ++a) {
        const double score = validation_score(trained.dynamics, trained.ensemble, trained.eval_policy, s, a, trained.u_max);
        const bool leaves = trained.dynamics.is_fallback(s, a) || trained.dynamics.row_ood_mass(s, a) > 0.0;
        (leaves ? out_scores : in_scores).push_back(score);
      }
    }
    RunRecord run;
    run.method = "odaf";
    run.environment = env.name;
    run.seed = config.seed;
    run.config = config;
    run.eval = evaluate(trained.policy, env.mdp, kPartialEvalEpisodes, env.horizon, mix_seed(config.seed, 5));
    run.trajectory = greedy_trajectory(trained.policy, env.mdp, env.horizon, mix_seed(config.seed, 6));
    run.ood_pairs = count_ood_pairs(run.trajectory, data);
    run.diagnostics = std::move(trained.diagnostics);
    const double m_out = median(out_scores);
    const double m_in = median(in_scores);
    run.extra = {{"out_of_support_actions", out_scores.size()},
                 {"in_support_actions", in_scores.size()},
                 {"median_out", m_out},
                 {"median_in", m_in},
                 {"ratio", m_in > 0.0 ? m_out / m_in : std::numeric_limits<double>::infinity()}};
    run.extra["ratio"] = run.extra["ratio"].get<double>();
    result.runs[i] = std::move(run);
  });

  std::size_t hits = 0;
  std::vector<double> ratios;
  for (const auto& r : result.runs) {
    const double m_out = r.extra["median_out"].get<double>();
    const double m_in = r.extra["median_in"].get<double>();
    ratios.push_back(m_in > 0.0 ? m_out / m_in : std::numeric_limits<double>::infinity());
    if (m_out >= 2.0 * m_in && m_out > 0.0) ++hits;
  }
  result.metadata = {{"median_ratio_per_seed", ratios}};
  result.checks.push_back(make_check("validation_score_discrimination", hits == S,
                                     fraction(hits, S) + " seeds with out-of-support median >= 2x in-support median"));
  return result;
}

nlohmann::json policy_to_json(const SoftmaxPolicy& policy, const std::string& environment) {
  return {{"format", "odaf-policy-v1"},
          {"environment", environment},
          {"num_states", policy.num_states()},
          {"num_actions", policy.num_actions()},
          {"logits", policy.all_logits()}};
}

SoftmaxPolicy policy_from_json(const nlohmann::json& j, std::string* environment) {
  try {
    if (j.at("format").get<std::string>() != "odaf-policy-v1") throw std::invalid_argument("unknown policy format");
    const int S = j.at("num_states").get<int>();
    const int A = j.at("num_actions").get<int>();
    auto logits = j.at("logits").get<std::vector<double>>();
    if (S <= 0 || A <= 0 || logits.size() != static_cast<std::size_t>(S) * static_cast<std::size_t>(A)) {
      throw std::invalid_argument("policy logits do not match the declared shape");
    }
    if (environment != nullptr) *environment = j.value("environment", std::string{});
    return SoftmaxPolicy(S, A, std::move(logits));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed policy checkpoint: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Verification suite

namespace {

template <typename F>
CheckResult timed(F&& body) {
  const auto start = std::chrono::steady_clock::now();
  CheckResult c = body();
  c.seconds = seconds_since(start);
  return c;
}

}  // namespace

CheckResult check_contraction(std::uint64_t seed, int mdps, int trials) {
  return timed([&] {
    constexpr double kGamma = 0.9;
    double max_ratio = 0.0;
    std::size_t violations = 0;
    nlohmann::json per_mdp = nlohmann::json::array();
    nlohmann::json counterexample;
    Rng rng(mix_seed(seed, 100));
    for (int m = 0; m < mdps; ++m) {
      const int S = 2 + static_cast<int>(rng.index(19));
      const int A = 1 + static_cast<int>(rng.index(5));
      const int B = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(std::min(S, 4))));
      const auto mdp = build_random_mdp(S, A, B, 1.0, kGamma, rng.next());
      // empirical model from a short uniform rollout so action gaps exist
      const auto data = rollout(mdp, SoftmaxPolicy(S, A), 5, 10, rng.next());
      const auto dyn = fit_empirical(data, 0.0);
      const auto model = backup_model(dyn, kGamma);
      const auto admissible = admissible_actions(dyn);
      const std::vector<std::pair<std::string, Backup>> backups{
          {"standard", [&](const QTable& q) { return standard_backup(q, model); }},
          {"action_support", [&](const QTable& q) { return action_support_backup(q, model, dyn); }},
          {"outcome_driven", [&](const QTable& q) { return outcome_driven_backup(q, model, admissible); }}};
      nlohmann::json row{{"states", S}, {"actions", A}};
      for (const auto& [name, backup] : backups) {
        const auto report = verify_contraction(backup, S, A, kGamma, trials, rng.next());
        max_ratio = std::max(max_ratio, report.max_ratio);
        row[name] = report.max_ratio;
        if (!report.pass) {
          ++violations;
          if (counterexample.is_null()) counterexample = to_json(report);
        }
      }
      per_mdp.push_back(row);
    }
    nlohmann::json data{{"gamma", kGamma}, {"max_ratio", max_ratio}, {"mdps", per_mdp}};
    if (!counterexample.is_null()) data["counterexample"] = counterexample;
    return make_check("contraction", violations == 0,
                      std::to_string(mdps) + " MDPs x " + std::to_string(trials) +
                          " pairs x 3 backups, max ratio " + format_double(max_ratio),
                      data);
  });
}

CheckResult check_theorem1(std::uint64_t seed, int triples) {
  return timed([&] {
    Rng rng(mix_seed(seed, 200));
    std::size_t checked = 0;
    std::size_t violations = 0;
    double min_slack = std::numeric_limits<double>::infinity();
    nlohmann::json counterexample;
    for (int t = 0; t < triples; ++t) {
      const int S = 3 + static_cast<int>(rng.index(13));
      const int A = 2 + static_cast<int>(rng.index(4));
      const int B = 1 + static_cast<int>(rng.index(3));
      const auto mdp = build_random_mdp(S, A, B, 1.0, 0.9, rng.next());
      const auto data = rollout(mdp, SoftmaxPolicy(S, A), 1 + static_cast<int>(rng.index(3)),
                                2 + static_cast<int>(rng.index(5)), rng.next());
      const auto dyn = fit_empirical(data, 0.0);
      std::vector<double> logits(static_cast<std::size_t>(S) * A);
      for (auto& v : logits) v = rng.uniform(-3.0, 3.0);
      const SoftmaxPolicy policy(S, A, logits);
      // uncertainty: positive on unseen pairs, arbitrary non-negative on seen ones
      std::vector<double> u(static_cast<std::size_t>(S) * A);
      for (int s = 0; s < S; ++s) {
        for (int a = 0; a < A; ++a) {
          u[static_cast<std::size_t>(s) * A + a] =
              data.in_pair_support(s, a) ? rng.uniform(0.0, 2.0) : rng.uniform(0.05, 5.0);
        }
      }
      double u_min = std::numeric_limits<double>::infinity();
      std::vector<double> u_pi(static_cast<std::size_t>(S), 0.0);
      for (int s = 0; s < S; ++s) {
        const auto pi = policy.probs(s);
        for (int a = 0; a < A; ++a) {
          const double v = u[static_cast<std::size_t>(s) * A + a];
          u_pi[static_cast<std::size_t>(s)] += pi[static_cast<std::size_t>(a)] * v;
          if (!dyn.in_state_support(s)) u_min = std::min(u_min, v);
        }
      }
      for (int s : dyn.support_states()) {
        const auto dist = transitioned_dist(dyn, s, policy);
        double lhs = 0.0;
        double mass = 0.0;
        for (int sp = 0; sp < S; ++sp) {
          lhs += dist.probs[static_cast<std::size_t>(sp)] * u_pi[static_cast<std::size_t>(sp)];
          if (!dyn.in_state_support(sp)) mass += dist.probs[static_cast<std::size_t>(sp)];
        }
        const double rhs = mass > 0.0 ? u_min * mass : 0.0;
        ++checked;
        min_slack = std::min(min_slack, lhs - rhs);
        const bool mass_agrees = std::abs(mass - ood_mass(dyn, s, policy)) <= 1e-12;
        if (lhs < rhs - 1e-12 || !mass_agrees) {
          ++violations;
          if (counterexample.is_null()) {
            counterexample = {{"triple", t}, {"state", s}, {"lhs", lhs}, {"rhs", rhs}, {"ood_mass", mass}};
          }
        }
      }
    }
    nlohmann::json data{{"triples", triples}, {"states_checked", checked}, {"min_slack", min_slack}};
    if (!counterexample.is_null()) data["counterexample"] = counterexample;
    return make_check("theorem1_bound", violations == 0,
                      std::to_string(checked) + " (triple, state) cases, min slack " + format_double(min_slack), data);
  });
}

CheckResult check_theorem2(std::uint64_t seed, int mdps) {
  return timed([&] {
    constexpr double kGamma = 0.9;
    Rng rng(mix_seed(seed, 300));
    bool rate_ok = true;
    double worst_slope = -std::numeric_limits<double>::infinity();
    double worst_delta = 0.0;
    nlohmann::json rates = nlohmann::json::array();
    for (int m = 0; m < mdps; ++m) {
      const int S = 5 + static_cast<int>(rng.index(16));
      const int A = 2 + static_cast<int>(rng.index(4));
      const auto mdp = build_random_mdp(S, A, 2, 1.0, kGamma, rng.next());
      const auto data = rollout(mdp, SoftmaxPolicy(S, A), 20, 20, rng.next());
      const auto dyn = fit_empirical(data, 0.0);
      QTable q0(S, A);
      for (auto& v : q0.values) v = rng.uniform(-10.0, 10.0);
      const auto report = verify_theorem2_rate(dyn, kGamma, q0, 60);
      rate_ok = rate_ok && report.pass;
      worst_slope = std::max(worst_slope, report.slope);
      worst_delta = std::max(worst_delta, report.max_delta_ratio);
      rates.push_back({{"states", S}, {"actions", A}, {"pass", report.pass}, {"slope", report.slope},
                       {"max_delta_ratio", report.max_delta_ratio}, {"failure", report.failure}});
    }
    const auto gap_mdp = build_random_mdp(10, 3, 2, 1.0, kGamma, mix_seed(seed, 301));
    const auto gaps = theorem2_gap_table(gap_mdp, {100, 1000, 10000}, 5, mix_seed(seed, 302));
    std::string medians;
    for (const auto& row : gaps.rows) medians += (medians.empty() ? "" : ", ") + format_double(row.median_gap);
    return make_check("theorem2_rate", rate_ok && gaps.pass,
                      "worst slope " + format_double(worst_slope) + " (log gamma " +
                          format_double(std::log(kGamma)) + "), worst delta ratio " + format_double(worst_delta) +
                          ", median gaps " + medians,
                      {{"rates", rates}, {"gap_table", to_json(gaps)}});
  });
}

CheckResult check_corollary1() {
  return timed([&] {
    const auto env = parse_environment("open10");
    const auto& mdp = env.mdp;
    const auto optimal = oracle_value_iteration(mdp);
    // every action at every state of the oracle-optimal path
    std::vector<Transition> corridor;
    Rng rng(0);
    int s = sample_initial_state(mdp, rng);
    std::vector<bool> seen(static_cast<std::size_t>(mdp.num_states), false);
    while (!mdp.terminal[static_cast<std::size_t>(s)] && !seen[static_cast<std::size_t>(s)]) {
      seen[static_cast<std::size_t>(s)] = true;
      for (int a = 0; a < mdp.num_actions; ++a) {
        const auto r = step(mdp, s, a, rng);
        corridor.push_back({s, a, r.reward, r.next_state, r.done});
      }
      s = step(mdp, s, optimal.greedy_action(s), rng).next_state;
    }
    DynamicsOptions options;
    options.outcome_geometry = env.geometry;
    const TransitionDataset covered(mdp.num_states, mdp.num_actions, corridor);
    const auto report = verify_corollary1(mdp, EmpiricalDynamics::fit(covered, options));
    // negative control: drop the half of the corridor nearest the goal
    const TransitionDataset truncated(mdp.num_states, mdp.num_actions,
                                      std::vector<Transition>(corridor.begin(), corridor.begin() + corridor.size() / 2));
    const auto control = verify_corollary1(mdp, EmpiricalDynamics::fit(truncated, options));
    return make_check("corollary1", report.pass,
                      std::to_string(report.optimal_path_states.size()) + " optimal-path states, " +
                          std::to_string(report.disagreeing_states.size()) + " disagree; control without the goal half: " +
                          std::to_string(control.disagreeing_states.size()) + " disagree",
                      {{"covered", to_json(report)}, {"negative_control", to_json(control)}});
  });
}

CheckResult check_assumption1(std::uint64_t seed, int seeds, int iterations) {
  return timed([&] {
    const auto env = parse_environment("partial10");
    std::vector<nlohmann::json> rows(static_cast<std::size_t>(seeds));
    std::vector<int> ok(static_cast<std::size_t>(seeds), 0);
    parallel_for(static_cast<std::size_t>(seeds), 0, [&](std::size_t k) {
      TrainConfig config;
      config.seed = mix_seed(seed, 400 + k);
      config.iterations = iterations;
      config.eval_every = iterations;
      config.eval_episodes = 1;
      const auto data = partial_coverage_dataset(env, 20, config.seed);
      const auto trained = train(config, data, env);
      std::vector<double> unseen;
      std::vector<double> frequent;
      std::size_t pairs = 0;
      for (int s = 0; s < env.mdp.num_states; ++s) {
        if (env.mdp.terminal[static_cast<std::size_t>(s)]) continue;
        for (int a = 0; a < env.mdp.num_actions; ++a) {
          ++pairs;
          const int n = data.count_sa(s, a);
          if (n == 0) unseen.push_back(trained.ensemble.uncertainty(s, a));
          if (n >= 10) frequent.push_back(trained.ensemble.uncertainty(s, a));
        }
      }
      const double unseen_share = static_cast<double>(unseen.size()) / static_cast<double>(pairs);
      const double m_unseen = median(unseen);
      const double m_frequent = median(frequent);
      ok[k] = unseen_share >= 0.2 && !frequent.empty() && m_unseen > m_frequent;
      rows[k] = {{"seed", config.seed},         {"unseen_share", unseen_share},    {"median_unseen", m_unseen},
                 {"median_frequent", m_frequent}, {"frequent_pairs", frequent.size()}};
    });
    const auto hits = static_cast<std::size_t>(std::count(ok.begin(), ok.end(), 1));
    return make_check("assumption1_uncertainty", hits == static_cast<std::size_t>(seeds),
                      fraction(hits, static_cast<std::size_t>(seeds)) +
                          " seeds with median U(unseen) > median U(N >= 10)",
                      {{"seeds", rows}});
  });
}

CheckResult check_gradients(std::uint64_t seed, int configs) {
  return timed([&] {
    constexpr double kStep = 1e-5;
    constexpr double kTol = 1e-6;
    constexpr double kTieGap = 1e-4;
    constexpr std::array<Regularizer, 5> kRegs{Regularizer::none, Regularizer::odaf, Regularizer::action_support,
                                               Regularizer::state_recovery, Regularizer::behavior_clone};
    Rng rng(mix_seed(seed, 500));
    double worst = 0.0;
    int resampled = 0;
    nlohmann::json counterexample;
    int done = 0;
    while (done < configs) {
      const Regularizer reg = kRegs[static_cast<std::size_t>(done) % kRegs.size()];
      const int S = 3 + static_cast<int>(rng.index(8));
      const int A = 2 + static_cast<int>(rng.index(4));
      const auto mdp = build_random_mdp(S, A, 1 + static_cast<int>(rng.index(2)), 1.0, 0.9, rng.next());
      const auto data = rollout(mdp, SoftmaxPolicy(S, A), 2, 6, rng.next());
      const auto geometry = Geometry::graph(mdp);
      const auto dyn = fit_empirical(data, 0.0);
      std::vector<double> logits(static_cast<std::size_t>(S) * A);
      for (auto& v : logits) v = rng.uniform(-2.0, 2.0);
      SoftmaxPolicy policy(S, A, logits);
      std::vector<double> min_target(logits.size());
      for (auto& v : min_target) v = rng.uniform(-5.0, 5.0);
      std::vector<double> costs(logits.size());
      for (auto& v : costs) v = rng.uniform(0.0, 3.0);

      ActorContext ctx;
      ctx.dyn = &dyn;
      ctx.dataset = &data;
      ctx.geometry = &geometry;
      ctx.min_target = min_target;
      ctx.outcome_cost = costs;
      ctx.entropy_coef = rng.uniform(0.0, 0.5);
      ctx.beta_odaf = rng.uniform(0.1, 1.0);
      ctx.baseline_scale = rng.uniform(0.5, 3.0);
      ctx.radius = static_cast<int>(rng.index(3));
      ctx.regularizer = reg;

      const auto visited = data.visited_states();
      std::vector<int> states;
      for (int i = 0; i < 6; ++i) states.push_back(visited[rng.index(visited.size())]);

      // the penalty terms have kinks: resample when an evaluation point sits near one
      bool near_kink = false;
      for (int s : states) {
        const auto pi = policy.probs(s);
        if (reg == Regularizer::odaf) {
          std::vector<double> values;
          for (int n : geometry.neighborhood(s, ctx.radius)) {
            const auto pn = policy.probs(n);
            double v = 0.0;
            for (int a = 0; a < A; ++a) v += pn[static_cast<std::size_t>(a)] * costs[static_cast<std::size_t>(n) * A + a];
            values.push_back(v);
          }
          std::sort(values.rbegin(), values.rend());
          if (values.size() > 1 && values[0] - values[1] < kTieGap) near_kink = true;
        }
        if (reg == Regularizer::state_recovery) {
          const auto dist = transitioned_dist(dyn, s, policy);
          std::vector<double> diff = dist.probs;
          const int n = data.count_s(s);
          for (int a = 0; a < A; ++a) {
            for (const auto& [next, count] : data.next_counts(s, a)) {
              diff[static_cast<std::size_t>(next)] -= static_cast<double>(count) / n;
            }
          }
          for (double d : diff) {
            if (d != 0.0 && std::abs(d) < kTieGap) near_kink = true;
          }
        }
      }
      if (near_kink) {
        ++resampled;
        continue;
      }

      std::vector<double> grad(logits.size());
      actor_loss(policy, ctx, states, grad);
      std::vector<double> numeric(logits.size());
      for (std::size_t i = 0; i < logits.size(); ++i) {
        auto& x = policy.all_logits()[i];
        const double saved = x;
        x = saved + kStep;
        const double up = actor_loss(policy, ctx, states).total;
        x = saved - kStep;
        const double down = actor_loss(policy, ctx, states).total;
        x = saved;
        numeric[i] = (up - down) / (2.0 * kStep);
      }
      double err = 0.0;
      double norm = 0.0;
      for (std::size_t i = 0; i < grad.size(); ++i) {
        err += (grad[i] - numeric[i]) * (grad[i] - numeric[i]);
        norm += numeric[i] * numeric[i];
      }
      const double rel = std::sqrt(err) / std::max(std::sqrt(norm), 1e-8);
      worst = std::max(worst, rel);
      if (rel > kTol && counterexample.is_null()) {
        counterexample = {{"config", done},
                          {"regularizer", regularizer_name(reg)},
                          {"relative_error", rel},
                          {"analytic", grad},
                          {"numeric", numeric}};
      }
      ++done;
    }
    nlohmann::json data{{"configs", configs}, {"resampled", resampled}, {"worst_relative_error", worst}};
    if (!counterexample.is_null()) data["counterexample"] = counterexample;
    return make_check("actor_gradient", worst <= kTol,
                      std::to_string(configs) + " configs, worst relative error " + format_double(worst), data);
  });
}

bool VerificationReport::pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.pass; });
}

nlohmann::json VerificationReport::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : checks) arr.push_back(c.to_json());
  return {{"format", "odaf-verify-v1"}, {"pass", pass()}, {"checks", arr}};
}

VerificationReport run_verification_suite(std::uint64_t seed) {
  VerificationReport report;
  report.checks.push_back(check_contraction(seed));
  report.checks.push_back(check_theorem1(seed));
  report.checks.push_back(check_theorem2(seed));
  report.checks.push_back(check_corollary1());
  report.checks.push_back(check_assumption1(seed));
  report.checks.push_back(check_gradients(seed));
  return report;
}

}  // namespace odaf
