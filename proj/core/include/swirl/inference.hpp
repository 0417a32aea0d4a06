#pragma once

#include <span>
#include <vector>

#include "swirl/model.hpp"
#include "swirl/soft_q.hpp"

namespace swirl {

/// Posterior mode marginals p(z_t | xi) and pairwise p(z_t, z_{t+1} | xi).
struct ModePosteriors {
  Index num_steps = 0;
  Index num_modes = 0;
  std::vector<double> marginals;  // T x Z
  std::vector<double> pairs;      // (T-1) x Z x Z
  /// log p(xi | theta) including log p(s_1) and the environment kernel factors.
  double log_likelihood = 0.0;
  /// The parameter-dependent part: modes and actions given states.
  double policy_log_likelihood = 0.0;
  /// Set when the mode/action part has zero probability; posteriors are uniform.
  bool degenerate = false;

  double marginal(Index t, Index z) const { return marginals[t * num_modes + z]; }
  double pair(Index t, Index z, Index next) const {
    return pairs[(t * num_modes + z) * num_modes + next];
  }
};

/// Strided read-only view of log transition probabilities indexed by
/// (source mode, context, destination mode).
struct LogTransitionView {
  const double* data = nullptr;
  std::size_t stride_mode = 0;
  std::size_t stride_context = 0;
  std::size_t stride_next = 1;

  double operator()(Index z, Index context, Index next) const {
    return data[z * stride_mode + context * stride_context + next * stride_next];
  }
};

/// Inputs of a generic chain: z_1 ~ init, z_{t+1} ~ trans(z_t, context_t).
struct ChainModel {
  Index num_modes = 0;
  std::span<const double> log_init;      // Z
  std::span<const double> log_emission;  // T x Z
  std::span<const Index> context;        // T - 1
  LogTransitionView transition;
};

/// Log-space forward-backward over a generic chain. log_likelihood and
/// policy_log_likelihood both hold log sum_z alpha_T(z).
ModePosteriors forward_backward_chain(const ChainModel& chain);

LogTransitionView log_transition_view(const ModeTransition& mode_transition);

/// Mode posteriors of one trajectory under per-mode policies. The mode
/// transition at step t conditions on s_t. env_log_likelihood is added to
/// log_likelihood only.
ModePosteriors forward_backward(const Trajectory& traj,
                                std::span<const PolicyTable> policies,
                                const ModeTransition& mode_transition,
                                std::span<const double> init_mode,
                                const AugmentedSpace& aug,
                                double env_log_likelihood = 0.0);

/// Same as above with the environment terms taken from the model.
ModePosteriors forward_backward(const Trajectory& traj, const DiscreteHmMdp& model,
                                std::span<const PolicyTable> policies);

/// log p(s_1) + sum_t log P(s_{t+1} | s_t, a_t).
double environment_log_likelihood(const Trajectory& traj, const DiscreteHmMdp& model);

double sequence_log_likelihood(const Trajectory& traj, const DiscreteHmMdp& model,
                               std::span<const PolicyTable> policies);

/// Pointwise MAP labels; ties go to the smallest mode index.
std::vector<Index> map_segments(const ModePosteriors& posteriors);

/// Most probable joint mode sequence of a chain.
std::vector<Index> viterbi_chain(const ChainModel& chain);

std::vector<Index> viterbi_segments(const Trajectory& traj, const DiscreteHmMdp& model,
                                    std::span<const PolicyTable> policies);

}  // namespace swirl
