#include "doctest.h"
#include "oracles.hpp"
#include "swirl/inference.hpp"
#include "swirl/trainer.hpp"

using namespace swirl;

namespace {

PolicyTable random_policy(oracle::Gen& g, Index H, Index A) {
  PolicyTable p;
  p.num_histories = H;
  p.num_actions = A;
  for (Index h = 0; h < H; ++h) {
    for (double v : g.simplex(A)) {
      p.probs.push_back(v);
      p.log_probs.push_back(std::log(v));
    }
  }
  return p;
}

struct Instance {
  DiscreteHmMdp model;
  std::vector<PolicyTable> policies;
  Trajectory traj;
};

Instance random_instance(oracle::Gen& g) {
  Instance in;
  const Index Z = g.range(1, 3), S = g.range(1, 4), A = g.range(1, 3), L = g.range(1, 2);
  const Index T = g.range(1, 6);
  in.model = oracle::random_model(g, Z, S, A, L, g.coin(), false);
  for (Index z = 0; z < Z; ++z) {
    in.policies.push_back(random_policy(g, in.model.spaces.augmented_size(), A));
  }
  in.traj = oracle::random_trajectory(g, in.model.env, T);
  return in;
}

oracle::Enumerated enumerate(const Instance& in) {
  const auto& m = in.model;
  const Index Z = m.spaces.num_modes, T = in.traj.length();
  const Index S = m.spaces.num_states, L = m.spaces.history_len;
  std::vector<double> log_init(Z), log_em(T * Z);
  for (Index z = 0; z < Z; ++z) log_init[z] = std::log(m.init_mode[z]);
  for (Index t = 0; t < T; ++t) {
    const Index h = oracle::history_at(in.traj.states, t, S, L);
    for (Index z = 0; z < Z; ++z) log_em[t * Z + z] = in.policies[z].log_prob(h, in.traj.actions[t]);
  }
  return oracle::enumerate_chain(log_init, log_em, T, Z, [&](Index z, Index t, Index n) {
    return std::log(m.mode_transition.prob(z, in.traj.states[t], n));
  });
}

double env_ll(const Instance& in) {
  double ll = std::log(in.model.init_state[in.traj.states[0]]);
  for (Index t = 0; t + 1 < in.traj.length(); ++t) {
    ll += std::log(in.model.env(in.traj.states[t], in.traj.actions[t], in.traj.states[t + 1]));
  }
  return ll;
}

}  // namespace

TEST_CASE("forward-backward matches exhaustive enumeration on 100 random instances") {
  oracle::Gen g(41);
  for (int trial = 0; trial < 100; ++trial) {
    const Instance in = random_instance(g);
    const ModePosteriors post = forward_backward(in.traj, in.model, in.policies);
    const oracle::Enumerated want = enumerate(in);
    CHECK_FALSE(post.degenerate);
    CHECK(std::abs(post.policy_log_likelihood - want.log_likelihood) < 1e-8);
    CHECK(std::abs(post.log_likelihood - (want.log_likelihood + env_ll(in))) < 1e-8);
    REQUIRE(post.marginals.size() == want.marginals.size());
    REQUIRE(post.pairs.size() == want.pairs.size());
    for (Index i = 0; i < want.marginals.size(); ++i) {
      CHECK(std::abs(post.marginals[i] - want.marginals[i]) < 1e-8);
    }
    for (Index i = 0; i < want.pairs.size(); ++i) {
      CHECK(std::abs(post.pairs[i] - want.pairs[i]) < 1e-8);
    }
  }
}

TEST_CASE("Viterbi path matches the enumerated arg-max") {
  oracle::Gen g(42);
  for (int trial = 0; trial < 60; ++trial) {
    const Instance in = random_instance(g);
    const auto want = enumerate(in);
    CHECK(viterbi_segments(in.traj, in.model, in.policies) == want.best_path);
  }
}

TEST_CASE("posterior rows are normalized and pairs marginalize to singles") {
  oracle::Gen g(43);
  for (int trial = 0; trial < 30; ++trial) {
    const Instance in = random_instance(g);
    const ModePosteriors p = forward_backward(in.traj, in.model, in.policies);
    const Index Z = p.num_modes;
    for (Index t = 0; t < p.num_steps; ++t) {
      double sum = 0.0;
      for (Index z = 0; z < Z; ++z) sum += p.marginal(t, z);
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    for (Index t = 0; t + 1 < p.num_steps; ++t) {
      for (Index z = 0; z < Z; ++z) {
        double row = 0.0, col = 0.0;
        for (Index n = 0; n < Z; ++n) {
          row += p.pair(t, z, n);
          col += p.pair(t, n, z);
        }
        CHECK(row == doctest::Approx(p.marginal(t, z)).epsilon(1e-10));
        CHECK(col == doctest::Approx(p.marginal(t + 1, z)).epsilon(1e-10));
      }
    }
  }
}

TEST_CASE("single-step and single-mode chains") {
  oracle::Gen g(44);
  DiscreteHmMdp m = oracle::random_model(g, 1, 3, 2, 1, true, false);
  std::vector<PolicyTable> pol{random_policy(g, 3, 2)};
  const Trajectory one{{2}, {1}};
  const ModePosteriors p = forward_backward(one, m, pol);
  CHECK(p.marginal(0, 0) == doctest::Approx(1.0));
  CHECK(p.pairs.empty());
  CHECK(p.policy_log_likelihood == doctest::Approx(pol[0].log_prob(2, 1)));
  CHECK(map_segments(p) == std::vector<Index>{0});
}

TEST_CASE("zero-probability actions give a degenerate posterior") {
  oracle::Gen g(45);
  DiscreteHmMdp m = oracle::random_model(g, 2, 2, 2, 1, false, false);
  PolicyTable p = random_policy(g, 2, 2);
  p.probs[0 * 2 + 1] = 0.0;
  p.log_probs[0 * 2 + 1] = -INFINITY;
  std::vector<PolicyTable> pol{p, p};
  const Trajectory tr{{0, 1}, {1, 0}};
  const ModePosteriors post = forward_backward(tr, m, pol);
  CHECK(post.degenerate);
  CHECK(std::isinf(post.log_likelihood));
  CHECK(post.marginal(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("property: e_step is deterministic and leaves its inputs untouched") {
  oracle::Gen g(46);
  DiscreteHmMdp m = oracle::random_model(g, 2, 3, 2, 2, true, false);
  std::vector<Trajectory> data;
  for (int n = 0; n < 5; ++n) data.push_back(oracle::random_trajectory(g, m.env, 7));
  const DiscreteHmMdp before = m;
  const auto data_before = data;
  const EStepResult a = e_step(m, data);
  const EStepResult b = e_step(m, data, {}, 3);
  CHECK(a.train_ll == b.train_ll);
  CHECK(a.total_ll == b.total_ll);
  for (Index n = 0; n < data.size(); ++n) CHECK(a.posteriors[n].marginals == b.posteriors[n].marginals);
  CHECK(m.rewards.data() == before.rewards.data());
  CHECK(m.mode_transition.logits() == before.mode_transition.logits());
  CHECK(data == data_before);
}
