#include <algorithm>

#include "doctest.h"
#include "gradient_check.hpp"
#include "oracles.hpp"
#include "swirl/baselines.hpp"
#include "swirl/environments.hpp"
#include "swirl/error.hpp"
#include "swirl/evaluation.hpp"
#include "swirl/io.hpp"
#include "swirl/trainer.hpp"

using namespace swirl;

namespace {

using oracle::FdGradient;
using oracle::Problem;

Problem gridworld_problem(TransitionVariant variant, Index L, int iters) {
  GridworldSpec spec;
  spec.width = 3;
  spec.height = 3;
  spec.water_state = 8;
  const auto [model, truth] = build_gridworld(spec);
  Problem p;
  p.theta = model;
  p.data = sample_trajectories(model, 12, 40, 5).trajectories;
  p.config.variant = variant;
  p.config.history_len = L;
  p.config.em_iters = iters;
  return p;
}

}  // namespace

TEST_CASE("objective gradient matches central finite differences of G") {
  oracle::Gen g(61);
  for (int trial = 0; trial < 8; ++trial) {
    const Index L = 1 + trial % 2;
    const bool state_dependent = trial % 4 < 2;
    const bool on_action = trial >= 6;
    Problem p = oracle::random_problem(g, L, state_dependent, on_action);
    const EStepResult e = e_step(p.theta, p.data);
    const SufficientStats stats = sufficient_statistics(p.theta, e.posteriors, p.data);
    const ParameterGradient grad = objective_gradient(p.theta, stats, p.config);
    const FdGradient fd = oracle::finite_differences(p, stats, 1e-5);
    CAPTURE(trial);
    REQUIRE(grad.rewards.size() == fd.rewards.size());
    REQUIRE(grad.transition.size() == fd.transition.size());
    CHECK(oracle::grad_rel_err(grad.rewards, fd.rewards) < 1e-3);
    CHECK(oracle::grad_rel_err(grad.transition, fd.transition) < 1e-4);
    CHECK(oracle::grad_rel_err(grad.init, fd.init) < 1e-4);
  }
}

TEST_CASE("reward prior enters the gradient as -lambda * r") {
  oracle::Gen g(62);
  Problem p = oracle::random_problem(g, 1, true, false);
  const EStepResult e = e_step(p.theta, p.data);
  const SufficientStats stats = sufficient_statistics(p.theta, e.posteriors, p.data);
  const ParameterGradient plain = objective_gradient(p.theta, stats, p.config);
  p.config.reward_l2 = 2.5;
  const ParameterGradient prior = objective_gradient(p.theta, stats, p.config);
  const Index H = p.theta.spaces.augmented_size();
  for (Index z = 0; z < 2; ++z) {
    for (Index h = 0; h < H; ++h) {
      CHECK(prior.rewards[z * H + h] ==
            doctest::Approx(plain.rewards[z * H + h] - 2.5 * p.theta.rewards(z, h, 0)).epsilon(1e-10));
    }
  }
  double sq = 0.0;
  for (Index z = 0; z < 2; ++z) {
    for (Index h = 0; h < H; ++h) sq += p.theta.rewards(z, h, 0) * p.theta.rewards(z, h, 0);
  }
  CHECK(reward_penalty(p.theta, p.config) == doctest::Approx(0.5 * 2.5 * sq));
}

TEST_CASE("transition stickiness matches finite differences of the penalized objective") {
  oracle::Gen g(66);
  for (bool state_dependent : {true, false}) {
    Problem p = oracle::random_problem(g, 1, state_dependent, false);
    p.config.transition_stickiness = 3.0;
    const EStepResult e = e_step(p.theta, p.data);
    const SufficientStats stats = sufficient_statistics(p.theta, e.posteriors, p.data);
    const ParameterGradient grad = objective_gradient(p.theta, stats, p.config);
    const FdGradient fd = oracle::finite_differences(p, stats, 1e-5);
    CAPTURE(state_dependent);
    CHECK(oracle::grad_rel_err(grad.transition, fd.transition) < 1e-4);
    CHECK(oracle::grad_rel_err(grad.rewards, fd.rewards) < 1e-3);

    double expected = 0.0;
    const ModeTransition& mt = p.theta.mode_transition;
    for (Index z = 0; z < mt.num_modes(); ++z) {
      for (Index s = 0; s < mt.num_states(); ++s) expected -= 3.0 * mt.log_prob(z, s, z);
    }
    CHECK(transition_penalty(p.theta, p.config) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("auxiliary G from posteriors equals G from sufficient statistics") {
  oracle::Gen g(63);
  Problem p = oracle::random_problem(g, 2, true, false);
  const EStepResult e = e_step(p.theta, p.data);
  const auto stats = sufficient_statistics(p.theta, e.posteriors, p.data);
  const AuxiliaryTerms a = auxiliary_G(p.theta, e.policies, e.posteriors, p.data);
  const AuxiliaryTerms b = auxiliary_G(p.theta, e.policies, stats);
  CHECK(a.total() == doctest::Approx(b.total()).epsilon(1e-12));
  CHECK(a.policy == doctest::Approx(b.policy).epsilon(1e-12));
  CHECK(a.mode_transition == doctest::Approx(b.mode_transition).epsilon(1e-12));
}

TEST_CASE("m_step never lowers G") {
  oracle::Gen g(64);
  for (int trial = 0; trial < 4; ++trial) {
    Problem p = oracle::random_problem(g, 1 + trial % 2, trial < 2, false);
    p.config.softq_tol = 1e-8;
    p.config.softq_iters = 200;
    p.config.optimizer = trial % 2 ? Optimizer::kAdam : Optimizer::kGradientAscent;
    const EStepResult e = e_step(p.theta, p.data);
    const auto stats = sufficient_statistics(p.theta, e.posteriors, p.data);
    const DiscreteHmMdp next = m_step(p.theta, e.posteriors, p.data, p.config);
    CHECK(optimizable_objective(next, stats, p.config) >=
          optimizable_objective(p.theta, stats, p.config) - 1e-9);
  }
}

TEST_CASE("generalized EM: train log-likelihood never decreases") {
  for (auto variant : {TransitionVariant::kStateIndependent, TransitionVariant::kStateDependent}) {
    for (Index L : {1, 2}) {
      Problem p = gridworld_problem(variant, L, 12);
      p.config.reward_l2 = 0.0;
      const FitResult r = fit(p.data, p.theta.env, p.config);
      for (Index k = 1; k < r.train_ll_trace.size(); ++k) {
        CHECK(r.train_ll_trace[k] >= r.train_ll_trace[k - 1] - 1e-6);
      }
    }
  }
}

TEST_CASE("with a reward prior the penalized objective never decreases") {
  Problem p = gridworld_problem(TransitionVariant::kStateDependent, 2, 12);
  p.config.reward_l2 = 30.0;
  const FitResult r = fit(p.data, p.theta.env, p.config);
  REQUIRE(r.objective_trace.size() == r.train_ll_trace.size());
  for (Index k = 1; k < r.objective_trace.size(); ++k) {
    CHECK(r.objective_trace[k] >= r.objective_trace[k - 1] - 1e-6);
  }
}

TEST_CASE("with a transition prior the penalized objective never decreases") {
  Problem p = gridworld_problem(TransitionVariant::kStateDependent, 2, 12);
  p.config.transition_stickiness = 5.0;
  const FitResult r = fit(p.data, p.theta.env, p.config);
  for (Index k = 1; k < r.objective_trace.size(); ++k) {
    CHECK(r.objective_trace[k] >= r.objective_trace[k - 1] - 1e-6);
    CHECK(r.train_ll_trace[k] >= r.train_ll_trace[k - 1] - 1e-6);
  }
}

TEST_CASE("variant nesting: S-2 with tied transitions and L=1 rewards equals I-1") {
  oracle::Gen g(65);
  const DiscreteHmMdp i1 = oracle::random_model(g, 2, 3, 2, 1, false, true);
  DiscreteHmMdp s2 = i1;
  s2.spaces.history_len = 2;
  s2.rewards = lift_rewards(i1.rewards, 3, 1, 2);
  s2.mode_transition = ModeTransition(2, 3, i1.mode_transition.logits());
  CHECK(s2.mode_transition.state_dependent());
  std::vector<Trajectory> data;
  for (int n = 0; n < 6; ++n) data.push_back(oracle::random_trajectory(g, i1.env, 9));
  SoftQOptions o;
  o.tol = 1e-13;
  o.max_iters = 5000;
  const EStepResult a = e_step(i1, data, o);
  const EStepResult b = e_step(s2, data, o);
  CHECK(std::abs(a.total_ll - b.total_ll) < 1e-8);
  CHECK(std::abs(a.train_ll - b.train_ll) < 1e-8);
}

TEST_CASE("fits are deterministic and independent of the worker count") {
  Problem p = gridworld_problem(TransitionVariant::kStateDependent, 2, 5);
  const FitResult a = fit(p.data, p.theta.env, p.config);
  const FitResult b = fit(p.data, p.theta.env, p.config);
  CHECK(fit_result_to_json(a) == fit_result_to_json(b));
  p.config.workers = 3;
  const FitResult c = fit(p.data, p.theta.env, p.config);
  REQUIRE(c.train_ll_trace.size() == a.train_ll_trace.size());
  for (Index k = 0; k < a.train_ll_trace.size(); ++k) {
    CHECK(std::abs(c.train_ll_trace[k] - a.train_ll_trace[k]) < 1e-10);
  }
}

TEST_CASE("initialization follows the seeded recipe") {
  Problem p = gridworld_problem(TransitionVariant::kStateIndependent, 1, 1);
  p.config.sticky_init = 0.0;
  const DiscreteHmMdp a = initialize_parameters(p.data, p.theta.env, p.config);
  const DiscreteHmMdp b = initialize_parameters(p.data, p.theta.env, p.config);
  CHECK(a.rewards.data() == b.rewards.data());
  CHECK(validate_model(a).empty());
  CHECK_FALSE(a.mode_transition.state_dependent());
  double sum = 0.0;
  for (double v : a.init_state) sum += v;
  CHECK(sum == doctest::Approx(1.0));
  // Rewards are shared across actions by default.
  for (Index h = 0; h < a.spaces.augmented_size(); ++h) {
    for (Index act = 1; act < a.spaces.num_actions; ++act) {
      CHECK(a.rewards(0, h, act) == a.rewards(0, h, 0));
    }
  }
  p.config.sticky_init = 3.0;
  const DiscreteHmMdp sticky = initialize_parameters(p.data, p.theta.env, p.config);
  const auto l0 = a.mode_transition.tied_logits(), l1 = sticky.mode_transition.tied_logits();
  CHECK(l1[0] == doctest::Approx(l0[0] + 3.0));
  CHECK(l1[1] == doctest::Approx(l0[1]));
  p.config.seed = 9;
  CHECK(initialize_parameters(p.data, p.theta.env, p.config).rewards.data() != a.rewards.data());
}

TEST_CASE("multi-seed fitting ranks by train log-likelihood") {
  Problem p = gridworld_problem(TransitionVariant::kStateIndependent, 1, 3);
  const auto one = multi_seed_fit(p.data, p.theta.env, p.config, 1, 1);
  REQUIRE(one.size() == 1);
  CHECK(one[0].seed == p.config.seed);
  const auto top = multi_seed_fit(p.data, p.theta.env, p.config, 5, 3);
  REQUIRE(top.size() == 3);
  for (Index k = 1; k < top.size(); ++k) CHECK(top[k - 1].final_train_ll() >= top[k].final_train_ll());
  const auto all = fit_seeds(p.data, p.theta.env, p.config, 5);
  std::vector<double> lls;
  for (const auto& r : all) lls.push_back(r.final_train_ll());
  std::sort(lls.rbegin(), lls.rend());
  CHECK(top[0].final_train_ll() == lls[0]);
  CHECK(top[2].final_train_ll() == lls[2]);
  CHECK_THROWS_AS(multi_seed_fit(p.data, p.theta.env, p.config, 2, 3), InvalidArgument);
}

TEST_CASE("select_top keeps seed order among ties") {
  std::vector<FitResult> rs(3);
  for (int k = 0; k < 3; ++k) {
    rs[k].seed = k;
    rs[k].train_ll_trace = {k == 1 ? -5.0 : -1.0};
  }
  const auto top = select_top(rs, 2);
  CHECK(top[0].seed == 0);
  CHECK(top[1].seed == 2);
}

TEST_CASE("fit_maxent is the trainer with one mode and L = 1") {
  Problem p = gridworld_problem(TransitionVariant::kStateDependent, 2, 4);
  const FitResult a = fit_maxent(p.data, p.theta.env, p.config);
  FitConfig c = p.config;
  c.num_modes = 1;
  c.history_len = 1;
  c.variant = TransitionVariant::kStateIndependent;
  const FitResult b = fit(p.data, p.theta.env, c);
  CHECK(a.final_train_ll() == b.final_train_ll());
  CHECK(a.model.spaces.num_modes == 1);
}

TEST_CASE("config validation and variant names") {
  FitConfig c;
  CHECK_NOTHROW(c.validate());
  c.num_modes = 0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = FitConfig{};
  c.gamma = 1.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = FitConfig{};
  c.reward_l2 = -1.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = FitConfig{};
  c.sticky_init = -1.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = FitConfig{};
  c.variant = TransitionVariant::kStateDependent;
  c.history_len = 2;
  CHECK(c.variant_name() == "S-2");
  const auto [v, L] = parse_variant_name("I-3");
  CHECK(v == TransitionVariant::kStateIndependent);
  CHECK(L == 3);
  CHECK_THROWS_AS(parse_variant_name("X-2"), InvalidArgument);
  CHECK_THROWS_AS(parse_variant_name("S-0"), InvalidArgument);
}
