#include <doctest.h>

#include <cmath>

#include "odaf/ensemble.hpp"
#include "oracles.hpp"

using namespace odaf;

namespace {

EnsembleParams params_with(int k, double spread) {
  EnsembleParams p;
  p.k = k;
  p.init_spread = spread;
  return p;
}

}  // namespace

TEST_SUITE("ensemble") {
  TEST_CASE("zero spread means zero uncertainty") {
    const QEnsemble e(4, 3, params_with(5, 0.0), 1);
    for (double u : e.uncertainty_table()) CHECK(u == 0.0);
  }

  TEST_CASE("initial spread bounds the per-entry std") {
    const QEnsemble e(6, 4, params_with(10, 0.1), 2);
    for (int s = 0; s < 6; ++s) {
      for (int a = 0; a < 4; ++a) {
        CHECK(e.uncertainty(s, a) > 0.0);
        CHECK(e.uncertainty(s, a) <= 0.1);
      }
    }
  }

  TEST_CASE("same seed, same ensemble") {
    CHECK(QEnsemble(5, 2, params_with(10, 1.0), 9) == QEnsemble(5, 2, params_with(10, 1.0), 9));
    CHECK_FALSE(QEnsemble(5, 2, params_with(10, 1.0), 9) == QEnsemble(5, 2, params_with(10, 1.0), 10));
    CHECK_THROWS_AS(QEnsemble(5, 2, params_with(1, 1.0), 0), std::invalid_argument);
  }

  TEST_CASE("population standard deviation by hand") {
    QEnsemble equal(1, 1, params_with(3, 0.0), 0);
    for (int k = 0; k < 3; ++k) equal.member(k, 0, 0) = 1.0;
    CHECK(equal.uncertainty(0, 0) == 0.0);

    QEnsemble two(1, 1, params_with(2, 0.0), 0);
    two.member(0, 0, 0) = 0.0;
    two.member(1, 0, 0) = 2.0;
    CHECK(two.uncertainty(0, 0) == doctest::Approx(1.0));

    auto p = params_with(3, 0.0);
    p.beta_u = 2.0;
    QEnsemble three(1, 1, p, 0);
    for (int k = 0; k < 3; ++k) three.member(k, 0, 0) = k + 1.0;
    CHECK(three.uncertainty(0, 0) == doctest::Approx(1.633).epsilon(1e-3));
    CHECK(three.uncertainty(0, 0) == doctest::Approx(2.0 * std::sqrt(2.0 / 3.0)).epsilon(1e-14));
  }

  TEST_CASE("state uncertainty is the policy-weighted average") {
    QEnsemble e(1, 2, params_with(2, 0.0), 0);
    e.member(0, 0, 0) = -4.0;
    e.member(1, 0, 0) = 4.0;
    const std::vector<double> pi{0.25, 0.75};
    CHECK(e.state_uncertainty(pi, 0) == doctest::Approx(1.0));
    const std::vector<double> only_first{1.0, 0.0};
    CHECK(e.state_uncertainty(only_first, 0) == doctest::Approx(e.uncertainty(0, 0)));
    const QEnsemble flat(1, 2, params_with(2, 0.0), 0);
    CHECK(flat.state_uncertainty(SoftmaxPolicy(1, 2), 0) == 0.0);
  }

  TEST_CASE("zero learning rate changes nothing") {
    auto p = params_with(4, 1.0);
    p.learning_rate = 0.0;
    QEnsemble e(3, 2, p, 3);
    const QEnsemble before = e;
    const std::vector<Transition> batch{{0, 1, 1.0, 2, false}, {2, 0, -1.0, 1, true}};
    const double loss = e.td_update(batch, SoftmaxPolicy(3, 2), 0.1);
    CHECK(loss > 0.0);
    CHECK(e == before);
  }

  TEST_CASE("one full step with no discount lands on the reward") {
    auto p = params_with(3, 1.0);
    p.learning_rate = 1.0;
    p.discount = 0.0;
    p.mask_prob = 1.0;
    QEnsemble e(3, 2, p, 4);
    const std::vector<Transition> batch{{1, 0, 2.5, 2, false}};
    e.td_update(batch, SoftmaxPolicy(3, 2), 0.0);
    for (int k = 0; k < 3; ++k) CHECK(e.member(k, 1, 0) == 2.5);
  }

  TEST_CASE("repeated updates reach the soft policy values") {
    // deterministic 3-state chain, 2 actions; fixed stochastic policy
    const int S = 3;
    const int A = 2;
    const int next[3][2] = {{1, 2}, {2, 0}, {0, 1}};
    const double reward[3][2] = {{1.0, 0.0}, {-0.5, 2.0}, {0.3, -1.0}};
    const double gamma = 0.8;
    const double beta = 0.1;
    const SoftmaxPolicy policy(S, A, {0.4, -0.2, 1.0, 0.0, -0.5, 0.5});

    // Q = r + gamma * sum_a' pi(a'|s') (Q(s',a') - beta log pi(a'|s')), solved as a linear system
    std::vector<double> a(36, 0.0);
    std::vector<double> b(6);
    for (int s = 0; s < S; ++s) {
      for (int act = 0; act < A; ++act) {
        const int row = s * A + act;
        const int sp = next[s][act];
        a[static_cast<std::size_t>(row * 6 + row)] += 1.0;
        b[static_cast<std::size_t>(row)] = reward[s][act];
        for (int ap = 0; ap < A; ++ap) {
          const double p = policy.prob(sp, ap);
          a[static_cast<std::size_t>(row * 6 + sp * A + ap)] -= gamma * p;
          b[static_cast<std::size_t>(row)] -= gamma * p * beta * std::log(p);
        }
      }
    }
    const auto q = oracle::solve_linear(a, b);

    auto p = params_with(3, 0.0);
    p.discount = gamma;
    p.learning_rate = 0.5;
    p.tau = 1.0;
    p.mask_prob = 1.0;
    QEnsemble e(S, A, p, 0);
    std::vector<Transition> batch;
    for (int s = 0; s < S; ++s) {
      for (int act = 0; act < A; ++act) batch.push_back({s, act, reward[s][act], next[s][act], false});
    }
    for (int i = 0; i < 400; ++i) {
      e.td_update(batch, policy, beta);
      e.soft_update();
    }
    for (int s = 0; s < S; ++s) {
      for (int act = 0; act < A; ++act) {
        for (int k = 0; k < 3; ++k) CHECK(std::abs(e.member(k, s, act) - q[static_cast<std::size_t>(s * A + act)]) <= 1e-3);
      }
    }
    CHECK(e.td_loss(batch, policy, beta) < 1e-8);
  }

  TEST_CASE("terminal transitions bootstrap nothing") {
    auto p = params_with(2, 1.0);
    QEnsemble e(2, 1, p, 5);
    CHECK(e.soft_target({0, 0, 3.0, 1, true}, SoftmaxPolicy(2, 1), 0.2) == 3.0);
  }

  TEST_CASE("soft target update rule") {
    auto p = params_with(2, 0.0);
    p.tau = 0.5;
    QEnsemble e(1, 1, p, 0);
    e.member(0, 0, 0) = 2.0;
    e.soft_update();
    CHECK(e.target(0, 0, 0) == 1.0);

    auto whole = params_with(3, 1.0);
    whole.tau = 1.0;
    QEnsemble q(2, 2, whole, 6);
    for (int k = 0; k < 3; ++k) q.member(k, 1, 1) = 7.0 + k;
    q.soft_update();
    for (int k = 0; k < 3; ++k) CHECK(q.target(k, 1, 1) == 7.0 + k);

    // fixed members: the gap shrinks by (1 - tau) per update
    auto slow = params_with(2, 0.0);
    slow.tau = 0.1;
    QEnsemble g(1, 1, slow, 0);
    g.member(0, 0, 0) = 1.0;
    for (int i = 0; i < 50; ++i) g.soft_update();
    CHECK(std::abs(1.0 - g.target(0, 0, 0)) == doctest::Approx(std::pow(0.9, 50)).epsilon(1e-12));
  }

  TEST_CASE("min target and pinning") {
    QEnsemble e(2, 2, params_with(3, 1.0), 7);
    double lowest = 1e9;
    for (int k = 0; k < 3; ++k) lowest = std::min(lowest, e.target(k, 0, 1));
    CHECK(e.min_target(0, 1) == lowest);
    e.pin_state(1);
    for (int k = 0; k < 3; ++k) {
      for (int a = 0; a < 2; ++a) {
        CHECK(e.member(k, 1, a) == 0.0);
        CHECK(e.target(k, 1, a) == 0.0);
      }
    }
  }

  TEST_CASE("JSON round trip") {
    QEnsemble e(3, 2, params_with(4, 1.0), 8);
    e.td_update(std::vector<Transition>{{0, 1, 1.0, 2, false}}, SoftmaxPolicy(3, 2), 0.0);
    const auto back = QEnsemble::from_json(e.to_json());
    CHECK(back == e);
  }
}
