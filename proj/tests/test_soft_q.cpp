#include <algorithm>

#include "doctest.h"
#include "oracles.hpp"
#include "swirl/environments.hpp"
#include "swirl/error.hpp"
#include "swirl/soft_q.hpp"

using namespace swirl;

namespace {

std::vector<double> random_reward(oracle::Gen& g, Index n, double sd) {
  std::vector<double> r(n);
  for (double& x : r) x = g.normal(sd);
  return r;
}

double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  for (Index i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

}  // namespace

TEST_CASE("single-history fixed point has the closed form") {
  // One state, A actions, equal rewards: Q = (r + gamma * alpha * log A) / (1 - gamma).
  for (Index A : {1, 2, 5}) {
    const double r = 0.7, gamma = 0.9, alpha = 0.4;
    const EnvKernel env(1, A, std::vector<double>(A, 1.0));
    const auto kernel = augmented_env_kernel(env, Spaces{1, 1, A, 1});
    SoftQOptions o;
    o.tol = 1e-12;
    const QTable q = soft_q_iterate(std::vector<double>(A, r), kernel, gamma, alpha, o);
    const double want = (r + gamma * alpha * std::log(static_cast<double>(A))) / (1.0 - gamma);
    for (Index a = 0; a < A; ++a) CHECK(q(0, a) == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("soft-Q matches dense value iteration on random instances") {
  oracle::Gen g(21);
  for (int trial = 0; trial < 30; ++trial) {
    const Index S = g.range(1, 4), A = g.range(1, 3), L = g.range(1, 3);
    const EnvKernel env = oracle::random_env(g, S, A, g.coin());
    const Spaces sp{1, S, A, L};
    const auto kernel = augmented_env_kernel(env, sp);
    const double gamma = g.uniform(0.3, 0.95), alpha = g.uniform(0.2, 2.0);
    const auto r = random_reward(g, sp.augmented_size() * A, 1.0);
    SoftQOptions o;
    o.tol = 1e-12;
    o.max_iters = 5000;
    const QTable q = soft_q_iterate(r, kernel, gamma, alpha, o);
    const auto want = oracle::soft_q_reference(r, env, L, gamma, alpha);
    double scale = 1.0;
    for (double w : want) scale = std::max(scale, std::abs(w));
    CHECK(sup_diff(q.values, want) < 1e-9 * scale);
  }
}

TEST_CASE("augmented kernel rows agree with the decoded state kernel") {
  oracle::Gen g(22);
  const Index S = 3, A = 2, L = 2;
  const EnvKernel env = oracle::random_env(g, S, A, false);
  const auto kernel = augmented_env_kernel(env, Spaces{1, S, A, L});
  for (Index h = 0; h < 9; ++h) {
    const auto w = oracle::decode(h, S, L);
    for (Index a = 0; a < A; ++a) {
      double total = 0.0;
      for (Index h2 = 0; h2 < 9; ++h2) {
        const auto w2 = oracle::decode(h2, S, L);
        const double want = w2[0] == w[1] ? env(w[1], a, w2[1]) : 0.0;
        CHECK(kernel.prob(h, a, h2) == doctest::Approx(want).epsilon(1e-15));
        total += kernel.prob(h, a, h2);
      }
      CHECK(total == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("property: the soft Bellman operator is a gamma contraction") {
  oracle::Gen g(23);
  for (int trial = 0; trial < 100; ++trial) {
    const Index S = g.range(1, 5), A = g.range(1, 4), L = g.range(1, 2);
    const EnvKernel env = oracle::random_env(g, S, A, g.coin());
    const Spaces sp{1, S, A, L};
    const auto kernel = augmented_env_kernel(env, sp);
    const Index n = sp.augmented_size() * A;
    const double gamma = g.uniform(0.0, 0.99), alpha = g.uniform(0.05, 3.0);
    const auto r = random_reward(g, n, 1.0);
    const auto q1 = random_reward(g, n, 5.0), q2 = random_reward(g, n, 5.0);
    std::vector<double> t1(n), t2(n);
    soft_bellman_sweep(r, kernel, gamma, alpha, q1, t1);
    soft_bellman_sweep(r, kernel, gamma, alpha, q2, t2);
    CHECK(sup_diff(t1, t2) <= gamma * sup_diff(q1, q2) + 1e-12);
  }
}

TEST_CASE("residual drops below 1e-8 within 200 sweeps at gamma 0.95") {
  oracle::Gen g(24);
  const auto [model, truth] = build_gridworld(GridworldSpec{});
  const auto kernel = augmented_env_kernel(model.env, model.spaces);
  for (Index z = 0; z < 2; ++z) {
    const QTable q = soft_q_iterate(model.rewards.mode(z), kernel, 0.95, 0.1);
    CHECK(q.residual < 1e-8);
    CHECK(q.iterations_run <= 200);
  }
  for (int trial = 0; trial < 20; ++trial) {
    const Index S = g.range(2, 6), A = g.range(2, 4);
    const EnvKernel env = oracle::random_env(g, S, A, g.coin());
    const Spaces sp{1, S, A, 2};
    const auto k = augmented_env_kernel(env, sp);
    const QTable q = soft_q_iterate(random_reward(g, sp.augmented_size() * A, 2.0), k, 0.95,
                                    g.uniform(0.05, 1.0));
    CHECK(q.residual < 1e-8);
    CHECK(q.iterations_run <= 200);
  }
}

TEST_CASE("property: a constant reward shift leaves the policy unchanged") {
  oracle::Gen g(25);
  for (int trial = 0; trial < 30; ++trial) {
    const Index S = g.range(1, 4), A = g.range(2, 4), L = g.range(1, 2);
    const EnvKernel env = oracle::random_env(g, S, A, g.coin());
    const Spaces sp{1, S, A, L};
    const auto kernel = augmented_env_kernel(env, sp);
    const double gamma = 0.95, alpha = g.uniform(0.1, 1.0), c = g.normal(10.0);
    auto r = random_reward(g, sp.augmented_size() * A, 1.0);
    const PolicyTable p1 = boltzmann_policy(soft_q_iterate(r, kernel, gamma, alpha), alpha);
    for (double& x : r) x += c;
    const PolicyTable p2 = boltzmann_policy(soft_q_iterate(r, kernel, gamma, alpha), alpha);
    CHECK(sup_diff(p1.probs, p2.probs) < 1e-8);
  }
}

TEST_CASE("policy rows lie on the simplex and soft values match log-sum-exp") {
  oracle::Gen g(26);
  const EnvKernel env = oracle::random_env(g, 3, 3, false);
  const auto kernel = augmented_env_kernel(env, Spaces{1, 3, 3, 1});
  const auto r = random_reward(g, 9, 1.0);
  const QTable q = soft_q_iterate(r, kernel, 0.8, 0.5);
  const PolicyTable p = boltzmann_policy(q, 0.5);
  const auto v = soft_value(q.values, 3, 0.5);
  for (Index h = 0; h < 3; ++h) {
    double sum = 0.0, lse = 0.0;
    for (Index a = 0; a < 3; ++a) {
      sum += p(h, a);
      lse += std::exp(q(h, a) / 0.5);
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(v[h] == doctest::Approx(0.5 * std::log(lse)).epsilon(1e-12));
  }
}

TEST_CASE("acceleration does not change the fixed point") {
  oracle::Gen g(27);
  const EnvKernel env = oracle::random_env(g, 4, 2, false);
  const Spaces sp{1, 4, 2, 2};
  const auto kernel = augmented_env_kernel(env, sp);
  const auto r = random_reward(g, 32, 1.0);
  SoftQOptions plain;
  plain.extrapolate = false;
  plain.anderson_memory = 0;
  plain.max_iters = 3000;
  plain.tol = 1e-12;
  SoftQOptions fast;
  fast.tol = 1e-12;
  SoftQOptions shift_only = fast;
  shift_only.anderson_memory = 0;
  const QTable a = soft_q_iterate(r, kernel, 0.9, 0.3, plain);
  const QTable b = soft_q_iterate(r, kernel, 0.9, 0.3, fast);
  const QTable c = soft_q_iterate(r, kernel, 0.9, 0.3, shift_only);
  CHECK(sup_diff(a.values, b.values) < 1e-9);
  CHECK(sup_diff(a.values, c.values) < 1e-9);
  CHECK(b.iterations_run < a.iterations_run);
  CHECK(c.iterations_run < a.iterations_run);
}

TEST_CASE("reward gradient of the weighted log-policy matches finite differences") {
  oracle::Gen g(28);
  for (int trial = 0; trial < 10; ++trial) {
    const Index S = g.range(2, 3), A = g.range(2, 3), L = g.range(1, 2);
    const EnvKernel env = oracle::random_env(g, S, A, g.coin());
    const Spaces sp{1, S, A, L};
    const Index n = sp.augmented_size() * A;
    const auto kernel = augmented_env_kernel(env, sp);
    const double gamma = g.uniform(0.5, 0.95), alpha = g.uniform(0.3, 1.0);
    const auto r = random_reward(g, n, 1.0);
    std::vector<double> w(n);
    for (double& x : w) x = g.uniform(0.0, 3.0);
    auto objective = [&](const std::vector<double>& rr) {
      const auto lp = oracle::log_policy(oracle::soft_q_reference(rr, env, L, gamma, alpha), A, alpha);
      double acc = 0.0;
      for (Index i = 0; i < n; ++i) acc += w[i] * lp[i];
      return acc;
    };
    SoftQOptions o;
    o.tol = 1e-13;
    o.max_iters = 5000;
    const QTable q = soft_q_iterate(r, kernel, gamma, alpha, o);
    const auto grad = policy_reward_gradient(w, boltzmann_policy(q, alpha), kernel, gamma, alpha);
    const double eps = 1e-5;
    for (Index i = 0; i < n; ++i) {
      auto up = r, down = r;
      up[i] += eps;
      down[i] -= eps;
      const double fd = (objective(up) - objective(down)) / (2 * eps);
      CHECK(std::abs(grad[i] - fd) < 1e-6 * (1.0 + std::abs(fd)));
    }
  }
}

TEST_CASE("soft-Q rejects bad inputs") {
  const EnvKernel env(1, 1, {1.0});
  const auto kernel = augmented_env_kernel(env, Spaces{1, 1, 1, 1});
  CHECK_THROWS_AS(soft_q_iterate(std::vector<double>{NAN}, kernel, 0.9, 1.0), InvalidArgument);
  CHECK_THROWS_AS(soft_q_iterate(std::vector<double>{0.0}, kernel, 1.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(soft_q_iterate(std::vector<double>{0.0}, kernel, 0.9, 0.0), InvalidArgument);
}
