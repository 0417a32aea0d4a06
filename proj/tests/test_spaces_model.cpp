#include "doctest.h"
#include "oracles.hpp"
#include "swirl/error.hpp"
#include "swirl/model.hpp"
#include "swirl/spaces.hpp"

using namespace swirl;

TEST_CASE("augmented index puts the oldest state first") {
  const AugmentedSpace aug(3, 2);
  const Index w[] = {1, 2};
  CHECK(aug.encode(w) == 1 * 3 + 2);
  CHECK(aug.decode(5) == std::vector<Index>{1, 2});
  CHECK(aug.last(5) == 2);
  CHECK(aug.total_size() == 9);
}

TEST_CASE("short windows are padded with their oldest state") {
  const AugmentedSpace aug(4, 3);
  const Index w[] = {2};
  CHECK(aug.decode(aug.encode(w)) == std::vector<Index>{2, 2, 2});
  const Index w2[] = {1, 3};
  CHECK(aug.decode(aug.encode(w2)) == std::vector<Index>{1, 1, 3});
  const std::vector<Index> states{0, 3, 1, 2};
  const auto seq = aug.encode_sequence(states);
  REQUIRE(seq.size() == 4);
  for (Index t = 0; t < 4; ++t) CHECK(seq[t] == oracle::history_at(states, t, 4, 3));
}

TEST_CASE("L = 1 encoding is the identity") {
  const AugmentedSpace aug(7, 1);
  for (Index s = 0; s < 7; ++s) {
    const Index w[] = {s};
    CHECK(aug.encode(w) == s);
    CHECK(aug.shift(s, 4) == 4);
  }
}

TEST_CASE("property: encode and decode are inverse bijections") {
  oracle::Gen g(11);
  for (int trial = 0; trial < 50; ++trial) {
    const Index S = g.range(1, 5), L = g.range(1, 4);
    const AugmentedSpace aug(S, L);
    for (Index h = 0; h < aug.total_size(); ++h) {
      const auto w = aug.decode(h);
      CHECK(aug.encode(w) == h);
      CHECK(w == oracle::decode(h, S, L));
    }
  }
}

TEST_CASE("property: shift drops the oldest state and appends the new one") {
  oracle::Gen g(12);
  for (int trial = 0; trial < 200; ++trial) {
    const Index S = g.range(1, 5), L = g.range(1, 4);
    const AugmentedSpace aug(S, L);
    const Index h = g.index(aug.total_size()), s = g.index(S);
    auto w = oracle::decode(h, S, L);
    w.erase(w.begin());
    w.push_back(s);
    CHECK(aug.shift(h, s) == oracle::encode(w, S));
  }
}

TEST_CASE("spaces reject zero counts and overflowing history spaces") {
  CHECK_THROWS_AS(Spaces({0, 2, 2, 1}).validate(), InvalidArgument);
  CHECK_THROWS_AS(Spaces({1, 0, 2, 1}).validate(), InvalidArgument);
  CHECK_THROWS_AS(Spaces({1, 2, 0, 1}).validate(), InvalidArgument);
  CHECK_THROWS_AS(Spaces({1, 2, 2, 0}).validate(), InvalidArgument);
  CHECK_THROWS_AS(Spaces({1, 1000, 5, 10}).validate(), InvalidArgument);
  CHECK(Spaces({2, 25, 5, 2}).augmented_size() == 625);
}

TEST_CASE("mode transition rows are normalized and tied tables are exact copies") {
  oracle::Gen g(3);
  std::vector<double> logits(3 * 4 * 3);
  for (double& l : logits) l = g.normal(2.0);
  const ModeTransition full(3, 4, logits);
  for (Index z = 0; z < 3; ++z) {
    for (Index s = 0; s < 4; ++s) {
      double sum = 0.0;
      for (Index n = 0; n < 3; ++n) {
        sum += full.prob(z, s, n);
        CHECK(std::exp(full.log_prob(z, s, n)) == doctest::Approx(full.prob(z, s, n)).epsilon(1e-12));
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  const std::vector<double> small{0.3, -1.0, 2.0, 0.1, 0.0, -0.5, 1.5, 0.2, 0.9};
  const ModeTransition tied = ModeTransition::tied(3, 4, small);
  CHECK_FALSE(tied.state_dependent());
  for (Index s = 1; s < 4; ++s) {
    for (Index z = 0; z < 3; ++z) {
      for (Index n = 0; n < 3; ++n) CHECK(tied.prob(z, s, n) == tied.prob(z, 0, n));
    }
  }
  CHECK(tied.tied_logits() == small);
  const ModeTransition u = ModeTransition::uniform(2, 3, true);
  CHECK(u.prob(1, 2, 0) == doctest::Approx(0.5));
}

TEST_CASE("deterministic environment kernels") {
  const std::vector<Index> next{1, 0, 1, 1};
  const EnvKernel env = EnvKernel::deterministic(2, 2, next);
  CHECK(env.is_deterministic());
  CHECK(env(0, 0, 1) == 1.0);
  CHECK(env(0, 1, 0) == 1.0);
  EnvKernel soft(2, 1, {0.5, 0.5, 0.0, 1.0});
  CHECK_FALSE(soft.is_deterministic());
}

TEST_CASE("validate_model reports broken rows and sizes") {
  oracle::Gen g(5);
  DiscreteHmMdp m = oracle::random_model(g, 2, 3, 2, 2, true, false);
  CHECK(validate_model(m).empty());
  m.env(0, 0, 0) += 0.5;
  m.init_mode = {0.7, 0.7};
  const auto v = validate_model(m);
  CHECK(v.size() >= 2);
  m = oracle::random_model(g, 2, 3, 2, 2, true, false);
  m.rewards = RewardTable(2, 3, 2);
  CHECK_FALSE(validate_model(m).empty());
}

TEST_CASE("validate_trajectory rejects empty, ragged and out-of-range data") {
  CHECK_THROWS_AS(validate_trajectory(Trajectory{}, 3, 2), DataError);
  CHECK_THROWS_AS(validate_trajectory(Trajectory{{0, 1}, {0}}, 3, 2), DataError);
  CHECK_THROWS_AS(validate_trajectory(Trajectory{{0, 3}, {0, 1}}, 3, 2), DataError);
  CHECK_THROWS_AS(validate_trajectory(Trajectory{{0, 2}, {0, 2}}, 3, 2), DataError);
  CHECK_NOTHROW(validate_trajectory(Trajectory{{0, 2}, {0, 1}}, 3, 2));
}
