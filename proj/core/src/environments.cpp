#include "swirl/environments.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "swirl/error.hpp"
#include "swirl/parallel.hpp"
#include "swirl/random.hpp"
#include "swirl/trainer.hpp"

namespace swirl {

void GridworldSpec::validate() const {
  if (width < 1 || height < 1) throw InvalidArgument("gridworld needs positive width and height");
  const Index S = num_states();
  if (home_state >= S || water_state >= S) {
    throw InvalidArgument("home/water state outside the grid");
  }
  if (home_state == water_state) throw InvalidArgument("home and water must differ");
  for (double p : {p_switch_trigger, p_switch_elsewhere}) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("switch probability outside [0, 1]");
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) throw InvalidArgument("gamma must lie in [0, 1)");
  if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
}

Index grid_step(const GridworldSpec& spec, Index state, GridAction action) {
  const Index row = state / spec.width, col = state % spec.width;
  switch (action) {
    case GridAction::kUp:
      return row > 0 ? state - spec.width : state;
    case GridAction::kDown:
      return row + 1 < spec.height ? state + spec.width : state;
    case GridAction::kLeft:
      return col > 0 ? state - 1 : state;
    case GridAction::kRight:
      return col + 1 < spec.width ? state + 1 : state;
    case GridAction::kStay:
      return state;
  }
  throw InvalidArgument("unknown gridworld action");
}

std::pair<DiscreteHmMdp, GroundTruth> build_gridworld(const GridworldSpec& spec) {
  spec.validate();
  const Index S = spec.num_states(), A = GridworldSpec::kNumActions, Z = 2, L = 2;

  std::vector<Index> next(S * A);
  for (Index s = 0; s < S; ++s) {
    for (Index a = 0; a < A; ++a) next[s * A + a] = grid_step(spec, s, static_cast<GridAction>(a));
  }

  DiscreteHmMdp m;
  m.spaces = Spaces{Z, S, A, L};
  m.env = EnvKernel::deterministic(S, A, next);
  m.gamma = spec.gamma;
  m.alpha = spec.alpha;
  const AugmentedSpace aug(m.spaces);
  const Index H = aug.total_size();

  m.rewards = RewardTable(Z, H, A);
  for (Index prev = 0; prev < S; ++prev) {
    for (Index cur = 0; cur < S; ++cur) {
      const Index h = prev * S + cur;
      const bool at_home = cur == spec.home_state;
      const bool water_edge = (prev != spec.water_state && cur == spec.water_state) ||
                              (prev == spec.water_state && cur != spec.water_state);
      for (Index a = 0; a < A; ++a) {
        m.rewards(kHomeMode, h, a) = at_home ? spec.reward_value : 0.0;
        m.rewards(kWaterMode, h, a) = water_edge ? spec.reward_value : 0.0;
      }
    }
  }

  // The home mode leaves at home, the water mode leaves at water.
  std::vector<double> logits(Z * S * Z);
  for (Index z = 0; z < Z; ++z) {
    const Index trigger = z == kHomeMode ? spec.home_state : spec.water_state;
    for (Index s = 0; s < S; ++s) {
      const double p = s == trigger ? spec.p_switch_trigger : spec.p_switch_elsewhere;
      for (Index n = 0; n < Z; ++n) {
        logits[(z * S + s) * Z + n] = std::log(n == z ? 1.0 - p : p);
      }
    }
  }
  m.mode_transition = ModeTransition(Z, S, std::move(logits));
  m.init_state.assign(S, 1.0 / static_cast<double>(S));
  m.init_mode.assign(Z, 1.0 / static_cast<double>(Z));

  GroundTruth gt;
  gt.true_rewards = m.rewards;
  gt.true_mode_transition = m.mode_transition;
  gt.home_state = spec.home_state;
  gt.water_state = spec.water_state;
  gt.feasible_histories.assign(H, 0);
  for (Index s = 0; s < S; ++s) {
    for (Index a = 0; a < A; ++a) gt.feasible_histories[s * S + next[s * A + a]] = 1;
  }
  return {std::move(m), std::move(gt)};
}

SampledData sample_trajectories(const DiscreteHmMdp& model,
                                std::span<const PolicyTable> policies, Index num,
                                Index length, std::uint64_t seed, std::size_t workers) {
  if (length < 1) throw InvalidArgument("trajectory length must be >= 1");
  if (policies.size() != model.spaces.num_modes) {
    throw InvalidArgument("one policy per mode is required");
  }
  const AugmentedSpace aug(model.spaces);
  const Index Z = model.spaces.num_modes;
  SampledData out;
  out.trajectories.resize(num);
  out.labels.resize(num);
  parallel_for(num, workers, [&](Index n) {
    Rng rng(derive_seed(seed, n));
    Trajectory& tr = out.trajectories[n];
    std::vector<Index>& z = out.labels[n];
    tr.states.reserve(length);
    tr.actions.reserve(length);
    z.reserve(length);
    Index s = sample_categorical(rng, model.init_state);
    Index mode = sample_categorical(rng, model.init_mode);
    const Index first[] = {s};
    Index h = aug.encode(first);
    for (Index t = 0; t < length; ++t) {
      tr.states.push_back(s);
      z.push_back(mode);
      const Index a = sample_categorical(rng, policies[mode].row(h));
      tr.actions.push_back(a);
      if (t + 1 == length) break;
      const Index s_next = sample_categorical(rng, model.env.row(s, a));
      std::vector<double> row(Z);
      for (Index k = 0; k < Z; ++k) row[k] = model.mode_transition.prob(mode, s, k);
      mode = sample_categorical(rng, row);
      s = s_next;
      h = aug.shift(h, s);
    }
  });
  return out;
}

SampledData sample_trajectories(const DiscreteHmMdp& model, Index num, Index length,
                                std::uint64_t seed, std::size_t workers) {
  const AugmentedKernel kernel = augmented_env_kernel(model.env, model.spaces);
  const auto policies = solve_policies(model, kernel, SoftQOptions{}, workers);
  return sample_trajectories(model, policies, num, length, seed, workers);
}

namespace {

// First k entries of a uniformly shuffled [0, n).
std::vector<Index> choose_positions(Index n, Index k, Rng& rng) {
  std::vector<Index> idx(n);
  std::iota(idx.begin(), idx.end(), Index{0});
  for (Index i = 0; i < k; ++i) {
    const Index j = i + uniform_index(rng, n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace

std::vector<Trajectory> perturb_trajectories(std::span<const Trajectory> data,
                                             double fraction, Index num_states,
                                             Index num_actions, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw InvalidArgument("perturbation fraction must lie in [0, 1]");
  }
  std::vector<Trajectory> out(data.begin(), data.end());
  std::vector<std::pair<Index, Index>> where;  // (trajectory, step) of flat entries
  for (Index n = 0; n < out.size(); ++n) {
    for (Index t = 0; t < out[n].length(); ++t) where.emplace_back(n, t);
  }
  const Index count = where.size();
  const auto k = static_cast<Index>(std::floor(fraction * static_cast<double>(count)));

  Rng state_rng(derive_seed(seed, 0));
  for (Index pos : choose_positions(count, k, state_rng)) {
    out[where[pos].first].states[where[pos].second] = uniform_index(state_rng, num_states);
  }
  Rng action_rng(derive_seed(seed, 1));
  for (Index pos : choose_positions(count, k, action_rng)) {
    out[where[pos].first].actions[where[pos].second] = uniform_index(action_rng, num_actions);
  }
  return out;
}

std::pair<std::vector<Index>, std::vector<Index>> train_test_split_indices(
    Index n, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw InvalidArgument("train fraction must lie in [0, 1]");
  }
  Rng rng(derive_seed(seed, 0));
  std::vector<Index> idx = choose_positions(n, n, rng);
  const auto cut = static_cast<Index>(std::floor(fraction * static_cast<double>(n)));
  std::vector<Index> train(idx.begin(), idx.begin() + cut), test(idx.begin() + cut, idx.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {std::move(train), std::move(test)};
}

EnvKernel empirical_env_kernel(std::span<const Trajectory> data, Index num_states,
                               Index num_actions, double pseudo_count) {
  if (!(pseudo_count > 0.0)) throw InvalidArgument("pseudo_count must be positive");
  const Index S = num_states, A = num_actions;
  std::vector<double> counts(S * A * S, pseudo_count);
  for (const Trajectory& tr : data) {
    validate_trajectory(tr, S, A);
    for (Index t = 0; t + 1 < tr.length(); ++t) {
      counts[(tr.states[t] * A + tr.actions[t]) * S + tr.states[t + 1]] += 1.0;
    }
  }
  for (Index r = 0; r < S * A; ++r) {
    double total = 0.0;
    for (Index n = 0; n < S; ++n) total += counts[r * S + n];
    for (Index n = 0; n < S; ++n) counts[r * S + n] /= total;
  }
  return EnvKernel(S, A, std::move(counts));
}

}  // namespace swirl
