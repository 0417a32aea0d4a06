#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "swirl/model.hpp"
#include "swirl/soft_q.hpp"

namespace swirl {

/// Gridworld actions in index order.
enum class GridAction : Index { kUp = 0, kDown = 1, kLeft = 2, kRight = 3, kStay = 4 };

/// Home/water gridworld. States are row * width + col.
struct GridworldSpec {
  Index width = 5;
  Index height = 5;
  Index home_state = 0;
  Index water_state = 24;
  double p_switch_trigger = 0.8;
  double p_switch_elsewhere = 0.02;
  double gamma = 0.95;
  double alpha = 0.1;
  double reward_value = 1.0;

  Index num_states() const { return width * height; }
  static constexpr Index kNumActions = 5;
  void validate() const;
};

/// Mode indices of the generated model.
inline constexpr Index kHomeMode = 0;
inline constexpr Index kWaterMode = 1;

struct GroundTruth {
  RewardTable true_rewards;  // 2 x S^2 x A
  ModeTransition true_mode_transition;
  /// Histories h = (s_{t-1}, s_t) reachable in one step; 1 = feasible.
  std::vector<unsigned char> feasible_histories;
  Index home_state = 0;
  Index water_state = 0;
};

/// Next state of a gridworld move; moves off the boundary stay in place.
Index grid_step(const GridworldSpec& spec, Index state, GridAction action);

/// True model (L = 2, Z = 2) and ground truth of the gridworld.
std::pair<DiscreteHmMdp, GroundTruth> build_gridworld(const GridworldSpec& spec);

struct SampledData {
  std::vector<Trajectory> trajectories;
  std::vector<std::vector<Index>> labels;
};

/// Ancestral sampling with per-trajectory seeds derive_seed(seed, n).
SampledData sample_trajectories(const DiscreteHmMdp& model,
                                std::span<const PolicyTable> policies, Index num,
                                Index length, std::uint64_t seed,
                                std::size_t workers = 1);

/// Solves soft-Q for the model's rewards, then samples.
SampledData sample_trajectories(const DiscreteHmMdp& model, Index num, Index length,
                                std::uint64_t seed, std::size_t workers = 1);

/// Replaces floor(p * count) state entries and floor(p * count) action entries,
/// chosen uniformly without replacement, with uniform random valid indices.
std::vector<Trajectory> perturb_trajectories(std::span<const Trajectory> data,
                                             double fraction, Index num_states,
                                             Index num_actions, std::uint64_t seed);

/// Seeded shuffle of [0, n) split so the first floor(fraction * n) are train.
std::pair<std::vector<Index>, std::vector<Index>> train_test_split_indices(
    Index n, double fraction, std::uint64_t seed);

template <typename T>
std::pair<std::vector<T>, std::vector<T>> train_test_split(std::span<const T> data,
                                                           double fraction,
                                                           std::uint64_t seed) {
  auto [train_idx, test_idx] = train_test_split_indices(data.size(), fraction, seed);
  std::vector<T> train, test;
  train.reserve(train_idx.size());
  test.reserve(test_idx.size());
  for (Index i : train_idx) train.push_back(data[i]);
  for (Index i : test_idx) test.push_back(data[i]);
  return {std::move(train), std::move(test)};
}

/// Kernel estimated from observed transitions with additive smoothing.
EnvKernel empirical_env_kernel(std::span<const Trajectory> data, Index num_states,
                               Index num_actions, double pseudo_count = 1e-6);

}  // namespace swirl
