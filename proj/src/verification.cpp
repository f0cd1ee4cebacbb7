#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

#include "odaf/operators.hpp"
#include "odaf/rng.hpp"

namespace odaf {

namespace {

constexpr double kContractionSlack = 1e-9;

QTable random_table(int S, int A, double scale, Rng& rng) {
  QTable q(S, A);
  for (auto& v : q.values) v = rng.uniform(-scale, scale);
  return q;
}

double median(std::vector<double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

/// Least-squares slope of ys against their indices xs.
double regression_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace

ContractionReport verify_contraction(const Backup& backup, int num_states, int num_actions, double gamma, int trials,
                                     std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("verify_contraction: trials must be at least 1");
  ContractionReport report;
  report.gamma = gamma;
  report.trials = trials;
  Rng rng(seed);
  for (int t = 0; t < trials; ++t) {
    // vary the scale so both small and large differences are exercised
    const double scale = std::pow(10.0, rng.uniform(-2.0, 2.0));
    QTable u = random_table(num_states, num_actions, scale, rng);
    QTable v = random_table(num_states, num_actions, scale, rng);
    const double input_gap = sup_distance(u, v);
    const double output_gap = sup_distance(backup(u), backup(v));
    const double ratio = input_gap > 0.0 ? output_gap / input_gap : 0.0;
    report.max_ratio = std::max(report.max_ratio, ratio);
    if (output_gap > gamma * input_gap + kContractionSlack) {
      report.pass = false;
      if (!report.counterexample) report.counterexample = std::make_pair(std::move(u), std::move(v));
    }
  }
  return report;
}

RateReport verify_theorem2_rate(const EmpiricalDynamics& dyn, double discount, const QTable& q0, int k_max) {
  RateReport report;
  report.gamma = discount;
  const auto model = backup_model(dyn, discount);
  const auto admissible = admissible_actions(dyn);
  const Backup backup = [&](const QTable& q) { return outcome_driven_backup(q, model, admissible); };
  const QTable fixed = solve_fixed_point(backup, q0, 1e-13, 100000).q;

  QTable q = q0;
  report.initial_error = sup_distance(q, fixed);
  report.errors.push_back(report.initial_error);
  std::vector<double> deltas;
  for (int k = 1; k <= k_max; ++k) {
    QTable next = backup(q);
    deltas.push_back(sup_distance(next, q));
    q = std::move(next);
    report.errors.push_back(sup_distance(q, fixed));
  }

  const double floor = 1e-9 * std::max(1.0, report.initial_error);
  for (int k = 0; k <= k_max; ++k) {
    const double envelope = std::pow(discount, k) * report.initial_error;
    if (report.errors[static_cast<std::size_t>(k)] > envelope + floor) {
      report.pass = false;
      report.failure = "error above gamma^k envelope at k=" + std::to_string(k);
      break;
    }
  }
  for (std::size_t i = 1; i < deltas.size(); ++i) {
    if (deltas[i - 1] <= floor) break;
    const double ratio = deltas[i] / deltas[i - 1];
    report.delta_ratios.push_back(ratio);
    report.max_delta_ratio = std::max(report.max_delta_ratio, ratio);
    if (ratio > discount + 1e-9) {
      report.pass = false;
      if (report.failure.empty()) report.failure = "delta ratio above gamma at sweep " + std::to_string(i + 1);
    }
  }

  std::vector<double> ks;
  std::vector<double> logs;
  for (std::size_t k = 0; k < report.errors.size(); ++k) {
    if (report.errors[k] <= floor * 10.0) break;
    ks.push_back(static_cast<double>(k));
    logs.push_back(std::log(report.errors[k]));
  }
  if (ks.size() >= 2) {
    report.slope = regression_slope(ks, logs);
    if (report.slope > std::log(discount) + 0.01) {
      report.pass = false;
      if (report.failure.empty()) report.failure = "log-error slope above log(gamma) + 0.01";
    }
  } else {
    report.slope = std::log(discount);
  }
  return report;
}

GapReport theorem2_gap_table(const TabularMdp& mdp, const std::vector<int>& sizes, int seeds, std::uint64_t seed) {
  constexpr int kHorizon = 20;
  GapReport report;
  const QTable optimal = oracle_value_iteration(mdp, 1e-12);
  const SoftmaxPolicy uniform(mdp.num_states, mdp.num_actions);
  for (int n : sizes) {
    GapRow row;
    row.dataset_size = n;
    for (int k = 0; k < seeds; ++k) {
      const int episodes = std::max(1, n / kHorizon);
      const auto data = rollout(mdp, uniform, episodes, kHorizon, mix_seed(seed, static_cast<std::uint64_t>(n * 131 + k)));
      const auto dyn = fit_empirical(data, 0.0);
      const auto model = backup_model(dyn, mdp.discount);
      const auto admissible = admissible_actions(dyn);
      const auto fixed = solve_fixed_point(
          [&](const QTable& q) { return outcome_driven_backup(q, model, admissible); },
          QTable(mdp.num_states, mdp.num_actions), 1e-10, 100000);
      row.gaps.push_back(sup_distance(fixed.q, optimal));
    }
    row.median_gap = median(row.gaps);
    report.rows.push_back(std::move(row));
  }
  for (std::size_t i = 1; i < report.rows.size(); ++i) {
    if (report.rows[i].median_gap > report.rows[i - 1].median_gap) report.pass = false;
  }
  return report;
}

CorollaryReport verify_corollary1(const TabularMdp& mdp, const EmpiricalDynamics& dyn, double tol) {
  CorollaryReport report;
  const QTable optimal = oracle_value_iteration(mdp, 1e-12);
  const auto model = backup_model(dyn, mdp.discount);
  const auto admissible = admissible_actions(dyn);
  const QTable learned = solve_fixed_point([&](const QTable& q) { return outcome_driven_backup(q, model, admissible); },
                                           QTable(mdp.num_states, mdp.num_actions), 1e-11, 1000000)
                             .q;

  // states reachable under the oracle-greedy policy
  std::vector<bool> seen(static_cast<std::size_t>(mdp.num_states), false);
  std::deque<int> frontier;
  for (int s = 0; s < mdp.num_states; ++s) {
    if (mdp.initial_dist[static_cast<std::size_t>(s)] > 0.0) {
      seen[static_cast<std::size_t>(s)] = true;
      frontier.push_back(s);
    }
  }
  while (!frontier.empty()) {
    const int s = frontier.front();
    frontier.pop_front();
    if (mdp.terminal[s]) continue;
    report.optimal_path_states.push_back(s);
    const int a = optimal.greedy_action(s);
    for (int sp = 0; sp < mdp.num_states; ++sp) {
      if (mdp.p(s, a, sp) > 0.0 && !seen[static_cast<std::size_t>(sp)]) {
        seen[static_cast<std::size_t>(sp)] = true;
        frontier.push_back(sp);
      }
    }
  }
  std::sort(report.optimal_path_states.begin(), report.optimal_path_states.end());

  for (int s : report.optimal_path_states) {
    const int chosen = learned.greedy_action(s);
    const int best = optimal.greedy_action(s);
    if (optimal(s, chosen) < optimal.max_value(s) - std::max(tol, 1e-9 * std::abs(optimal.max_value(s)))) {
      report.disagreeing_states.push_back(s);
    }
    report.max_q_gap = std::max(report.max_q_gap, std::abs(learned(s, best) - optimal(s, best)));
  }
  report.pass = report.disagreeing_states.empty();
  return report;
}

nlohmann::json to_json(const QTable& q) {
  return {{"num_states", q.num_states}, {"num_actions", q.num_actions}, {"values", q.values}};
}

nlohmann::json to_json(const ContractionReport& report) {
  nlohmann::json j{{"check", report.check},
                   {"pass", report.pass},
                   {"trials", report.trials},
                   {"gamma", report.gamma},
                   {"max_ratio", report.max_ratio}};
  if (report.counterexample) {
    j["counterexample"] = {{"u", to_json(report.counterexample->first)}, {"v", to_json(report.counterexample->second)}};
  }
  return j;
}

nlohmann::json to_json(const RateReport& report) {
  nlohmann::json j{{"check", report.check},         {"pass", report.pass},
                   {"gamma", report.gamma},         {"initial_error", report.initial_error},
                   {"slope", report.slope},         {"max_delta_ratio", report.max_delta_ratio},
                   {"errors", report.errors}};
  if (!report.failure.empty()) j["counterexample"] = report.failure;
  return j;
}

nlohmann::json to_json(const GapReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : report.rows) {
    rows.push_back({{"n", row.dataset_size}, {"median_gap", row.median_gap}, {"gaps", row.gaps}});
  }
  return {{"check", report.check}, {"pass", report.pass}, {"gap_table", rows}};
}

nlohmann::json to_json(const CorollaryReport& report) {
  nlohmann::json j{{"check", report.check},
                   {"pass", report.pass},
                   {"optimal_path_states", report.optimal_path_states},
                   {"max_q_gap", report.max_q_gap}};
  if (!report.disagreeing_states.empty()) j["counterexample"] = report.disagreeing_states;
  return j;
}

}  // namespace odaf
