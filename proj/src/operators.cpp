#include "odaf/operators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "odaf/errors.hpp"

namespace odaf {

double QTable::max_value(int s) const {
  double best = (*this)(s, 0);
  for (int a = 1; a < num_actions; ++a) best = std::max(best, (*this)(s, a));
  return best;
}

int QTable::greedy_action(int s) const {
  int best = 0;
  for (int a = 1; a < num_actions; ++a) {
    if ((*this)(s, a) > (*this)(s, best)) best = a;
  }
  return best;
}

std::vector<int> QTable::greedy_policy() const {
  std::vector<int> out(static_cast<std::size_t>(num_states));
  for (int s = 0; s < num_states; ++s) out[static_cast<std::size_t>(s)] = greedy_action(s);
  return out;
}

double sup_distance(const QTable& x, const QTable& y) {
  if (x.values.size() != y.values.size()) throw std::invalid_argument("sup_distance: shape mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < x.values.size(); ++i) d = std::max(d, std::abs(x.values[i] - y.values[i]));
  return d;
}

BackupModel backup_model(const TabularMdp& mdp) {
  BackupModel model;
  model.num_states = mdp.num_states;
  model.num_actions = mdp.num_actions;
  model.discount = mdp.discount;
  model.rows.resize(static_cast<std::size_t>(mdp.num_states) * static_cast<std::size_t>(mdp.num_actions));
  model.reward = mdp.reward;
  for (int s = 0; s < mdp.num_states; ++s) {
    for (int a = 0; a < mdp.num_actions; ++a) {
      auto& row = model.rows[static_cast<std::size_t>(s) * mdp.num_actions + a];
      const auto dense = mdp.row(s, a);
      for (int sp = 0; sp < mdp.num_states; ++sp) {
        if (dense[static_cast<std::size_t>(sp)] > 0.0) row.push_back({sp, dense[static_cast<std::size_t>(sp)]});
      }
    }
  }
  return model;
}

BackupModel backup_model(const EmpiricalDynamics& dyn, double discount) {
  BackupModel model;
  model.num_states = dyn.num_states();
  model.num_actions = dyn.num_actions();
  model.discount = discount;
  const auto pairs = static_cast<std::size_t>(dyn.num_states()) * static_cast<std::size_t>(dyn.num_actions());
  model.rows.resize(pairs);
  model.reward.resize(pairs);
  for (int s = 0; s < dyn.num_states(); ++s) {
    for (int a = 0; a < dyn.num_actions(); ++a) {
      const auto idx = static_cast<std::size_t>(s) * dyn.num_actions() + a;
      const auto row = dyn.row(s, a);
      model.rows[idx].assign(row.begin(), row.end());
      model.reward[idx] = dyn.reward(s, a);
    }
  }
  return model;
}

AdmissibleActionSets admissible_actions(const EmpiricalDynamics& dyn) {
  AdmissibleActionSets sets;
  const auto S = static_cast<std::size_t>(dyn.num_states());
  sets.actions.resize(S);
  sets.fallback.resize(S);
  sets.candidates.resize(S);
  for (int s = 0; s < dyn.num_states(); ++s) {
    int least = 0;
    double least_mass = std::numeric_limits<double>::infinity();
    for (int a = 0; a < dyn.num_actions(); ++a) {
      const double mass = dyn.row_ood_mass(s, a);
      if (mass == 0.0) sets.actions[static_cast<std::size_t>(s)].push_back(a);
      if (mass < least_mass) {
        least_mass = mass;
        least = a;
      }
    }
    sets.fallback[static_cast<std::size_t>(s)] = least;
    sets.candidates[static_cast<std::size_t>(s)] =
        sets.actions[static_cast<std::size_t>(s)].empty() ? std::vector<int>{least} : sets.actions[static_cast<std::size_t>(s)];
  }
  return sets;
}

AdmissibleActionSets all_actions(int num_states, int num_actions) {
  AdmissibleActionSets sets;
  std::vector<int> every(static_cast<std::size_t>(num_actions));
  for (int a = 0; a < num_actions; ++a) every[static_cast<std::size_t>(a)] = a;
  sets.actions.assign(static_cast<std::size_t>(num_states), every);
  sets.candidates = sets.actions;
  sets.fallback.assign(static_cast<std::size_t>(num_states), 0);
  return sets;
}

namespace {

void check_shape(const QTable& q, const BackupModel& model) {
  if (q.num_states != model.num_states || q.num_actions != model.num_actions) {
    throw std::invalid_argument("backup: Q table shape does not match the model");
  }
}

/// One Jacobi sweep with a per-state bootstrap value.
template <typename StateValue>
QTable sweep(const QTable& q, const BackupModel& model, StateValue&& value_of) {
  check_shape(q, model);
  std::vector<double> v(static_cast<std::size_t>(model.num_states));
  for (int s = 0; s < model.num_states; ++s) v[static_cast<std::size_t>(s)] = value_of(s);
  QTable out(model.num_states, model.num_actions);
  for (int s = 0; s < model.num_states; ++s) {
    for (int a = 0; a < model.num_actions; ++a) {
      double expected = 0.0;
      for (const auto& o : model.row(s, a)) expected += o.prob * v[static_cast<std::size_t>(o.state)];
      out(s, a) = model.r(s, a) + model.discount * expected;
    }
  }
  return out;
}

}  // namespace

QTable standard_backup(const QTable& q, const BackupModel& model) {
  return sweep(q, model, [&](int s) { return q.max_value(s); });
}

QTable action_support_backup(const QTable& q, const BackupModel& model, const EmpiricalDynamics& dyn) {
  return sweep(q, model, [&](int s) {
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < q.num_actions; ++a) {
      if (dyn.pair_supported(s, a)) best = std::max(best, q(s, a));
    }
    return std::isinf(best) ? 0.0 : best;
  });
}

QTable outcome_driven_backup(const QTable& q, const BackupModel& model, const AdmissibleActionSets& admissible) {
  if (admissible.candidates.size() != static_cast<std::size_t>(model.num_states)) {
    throw std::invalid_argument("outcome_driven_backup: admissible sets do not match the model");
  }
  return sweep(q, model, [&](int s) {
    double best = -std::numeric_limits<double>::infinity();
    for (int a : admissible.candidates[static_cast<std::size_t>(s)]) best = std::max(best, q(s, a));
    return best;
  });
}

FixedPointResult solve_fixed_point(const Backup& backup, QTable q0, double tol, int max_iter) {
  if (!(tol > 0.0)) throw std::invalid_argument("solve_fixed_point: tol must be positive");
  FixedPointResult result;
  result.q = std::move(q0);
  for (int k = 0; k < max_iter; ++k) {
    QTable next = backup(result.q);
    const double delta = sup_distance(next, result.q);
    result.trace.push_back(delta);
    result.q = std::move(next);
    result.iterations = k + 1;
    if (delta < tol) return result;
  }
  throw ConvergenceError("solve_fixed_point: no convergence within " + std::to_string(max_iter) + " sweeps",
                         std::move(result.trace));
}

QTable oracle_value_iteration(const TabularMdp& mdp, double tol) {
  const int S = mdp.num_states;
  const int A = mdp.num_actions;
  std::vector<double> value(static_cast<std::size_t>(S), 0.0);
  std::vector<double> next_value(static_cast<std::size_t>(S), 0.0);
  QTable q(S, A);
  for (int iteration = 0; iteration < 1000000; ++iteration) {
    double change = 0.0;
    for (int s = 0; s < S; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < A; ++a) {
        double total = mdp.r(s, a);
        const auto row = mdp.row(s, a);
        for (int sp = 0; sp < S; ++sp) total += mdp.discount * row[static_cast<std::size_t>(sp)] * value[static_cast<std::size_t>(sp)];
        q(s, a) = total;
        best = std::max(best, total);
      }
      next_value[static_cast<std::size_t>(s)] = best;
      change = std::max(change, std::abs(best - value[static_cast<std::size_t>(s)]));
    }
    value.swap(next_value);
    if (change < tol) break;
  }
  return q;
}

std::vector<double> evaluate_deterministic_policy(const TabularMdp& mdp, const std::vector<int>& actions, double tol) {
  const int S = mdp.num_states;
  std::vector<double> value(static_cast<std::size_t>(S), 0.0);
  std::vector<double> next_value(static_cast<std::size_t>(S), 0.0);
  for (int iteration = 0; iteration < 1000000; ++iteration) {
    double change = 0.0;
    for (int s = 0; s < S; ++s) {
      const int a = actions[static_cast<std::size_t>(s)];
      double total = mdp.r(s, a);
      const auto row = mdp.row(s, a);
      for (int sp = 0; sp < S; ++sp) total += mdp.discount * row[static_cast<std::size_t>(sp)] * value[static_cast<std::size_t>(sp)];
      next_value[static_cast<std::size_t>(s)] = total;
      change = std::max(change, std::abs(total - value[static_cast<std::size_t>(s)]));
    }
    value.swap(next_value);
    if (change < tol) break;
  }
  return value;
}

}  // namespace odaf
