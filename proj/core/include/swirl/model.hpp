#pragma once

#include <span>
#include <string>
#include <vector>

#include "swirl/spaces.hpp"

namespace swirl {

/// Environment transition kernel P(s' | s, a), stored dense as S x A x S.
class EnvKernel {
 public:
  EnvKernel() = default;
  EnvKernel(Index num_states, Index num_actions);
  EnvKernel(Index num_states, Index num_actions, std::vector<double> probs);

  /// Kernel where action a moves s to next_state[s * A + a] with probability 1.
  static EnvKernel deterministic(Index num_states, Index num_actions,
                                 std::span<const Index> next_state);

  Index num_states() const { return num_states_; }
  Index num_actions() const { return num_actions_; }

  double operator()(Index s, Index a, Index next) const {
    return probs_[(s * num_actions_ + a) * num_states_ + next];
  }
  double& operator()(Index s, Index a, Index next) {
    return probs_[(s * num_actions_ + a) * num_states_ + next];
  }
  std::span<const double> row(Index s, Index a) const {
    return {probs_.data() + (s * num_actions_ + a) * num_states_, num_states_};
  }

  /// True when every row is one-hot.
  bool is_deterministic() const;

  const std::vector<double>& data() const { return probs_; }

 private:
  Index num_states_ = 0;
  Index num_actions_ = 0;
  std::vector<double> probs_;
};

/// Per-mode reward r_z(h, a) over augmented histories, Z x S^L x A.
class RewardTable {
 public:
  RewardTable() = default;
  RewardTable(Index num_modes, Index num_histories, Index num_actions,
              double fill = 0.0);
  RewardTable(Index num_modes, Index num_histories, Index num_actions,
              std::vector<double> values);

  Index num_modes() const { return num_modes_; }
  Index num_histories() const { return num_histories_; }
  Index num_actions() const { return num_actions_; }

  double operator()(Index z, Index h, Index a) const {
    return values_[(z * num_histories_ + h) * num_actions_ + a];
  }
  double& operator()(Index z, Index h, Index a) {
    return values_[(z * num_histories_ + h) * num_actions_ + a];
  }

  /// Contiguous H x A slice of one mode.
  std::span<const double> mode(Index z) const {
    return {values_.data() + z * num_histories_ * num_actions_,
            num_histories_ * num_actions_};
  }
  std::span<double> mode(Index z) {
    return {values_.data() + z * num_histories_ * num_actions_,
            num_histories_ * num_actions_};
  }

  const std::vector<double>& data() const { return values_; }
  std::vector<double>& data() { return values_; }

 private:
  Index num_modes_ = 0;
  Index num_histories_ = 0;
  Index num_actions_ = 0;
  std::vector<double> values_;
};

/// Hidden-mode transition P_z(z' | z, s) parameterized by softmax logits over z'.
///
/// Logits are always stored as Z x S x Z. A state-independent transition keeps
/// identical copies for every s, so probabilities are tied exactly.
class ModeTransition {
 public:
  ModeTransition() = default;
  /// State-dependent table from Z x S x Z logits.
  ModeTransition(Index num_modes, Index num_states, std::vector<double> logits);
  /// State-independent table from Z x Z logits, replicated over states.
  static ModeTransition tied(Index num_modes, Index num_states,
                             std::span<const double> logits);
  /// Uniform transition (all logits zero).
  static ModeTransition uniform(Index num_modes, Index num_states,
                                bool state_dependent);

  Index num_modes() const { return num_modes_; }
  Index num_states() const { return num_states_; }
  bool state_dependent() const { return state_dependent_; }

  double logit(Index z, Index s, Index next) const {
    return logits_[(z * num_states_ + s) * num_modes_ + next];
  }
  double prob(Index z, Index s, Index next) const {
    return probs_[(z * num_states_ + s) * num_modes_ + next];
  }
  double log_prob(Index z, Index s, Index next) const {
    return log_probs_[(z * num_states_ + s) * num_modes_ + next];
  }
  std::span<const double> log_prob_row(Index z, Index s) const {
    return {log_probs_.data() + (z * num_states_ + s) * num_modes_, num_modes_};
  }

  const std::vector<double>& logits() const { return logits_; }
  /// Z x Z logits of a tied table (the s = 0 slice).
  std::vector<double> tied_logits() const;

 private:
  void refresh();

  Index num_modes_ = 0;
  Index num_states_ = 0;
  bool state_dependent_ = true;
  std::vector<double> logits_;
  std::vector<double> probs_;
  std::vector<double> log_probs_;
};

/// Full parameter record of a discrete hidden-mode MDP.
struct DiscreteHmMdp {
  Spaces spaces;
  EnvKernel env;
  RewardTable rewards;
  ModeTransition mode_transition;
  std::vector<double> init_state;
  std::vector<double> init_mode;
  double gamma = 0.95;
  double alpha = 0.1;
};

/// One demonstration: equal-length state and action index sequences.
struct Trajectory {
  std::vector<Index> states;
  std::vector<Index> actions;

  Index length() const { return states.size(); }
  bool operator==(const Trajectory&) const = default;
};

/// Throws DataError when the trajectory is empty, ragged, or out of range.
void validate_trajectory(const Trajectory& traj, Index num_states,
                         Index num_actions);

/// Every invariant violation of the model, in a stable order. Empty means ok.
std::vector<std::string> validate_model(const DiscreteHmMdp& model);

}  // namespace swirl
