#pragma once

#include <span>
#include <vector>

#include "swirl/model.hpp"

namespace swirl {

/// Environment kernel lifted to augmented histories, stored as sparse rows.
///
/// Row (h, a) lists the histories h' = shift(h, s') with P(s' | last(h), a) > 0.
class AugmentedKernel {
 public:
  struct Entry {
    Index next;
    double prob;
  };

  AugmentedKernel() = default;
  AugmentedKernel(Index num_histories, Index num_actions,
                  std::vector<std::size_t> row_offsets,
                  std::vector<Entry> entries);

  Index num_histories() const { return num_histories_; }
  Index num_actions() const { return num_actions_; }

  std::span<const Entry> row(Index h, Index a) const {
    const std::size_t r = h * num_actions_ + a;
    return {entries_.data() + offsets_[r], offsets_[r + 1] - offsets_[r]};
  }

  /// P(h' | h, a); zero for entries outside the sparse row.
  double prob(Index h, Index a, Index next) const;

 private:
  Index num_histories_ = 0;
  Index num_actions_ = 0;
  std::vector<std::size_t> offsets_;
  std::vector<Entry> entries_;
};

AugmentedKernel augmented_env_kernel(const EnvKernel& env, const Spaces& spaces);

/// Soft Q values over (h, a) plus convergence diagnostics.
struct QTable {
  Index num_histories = 0;
  Index num_actions = 0;
  std::vector<double> values;  // H x A, row-major
  int iterations_run = 0;
  double residual = 0.0;  // sup-norm of the last Bellman update

  double operator()(Index h, Index a) const { return values[h * num_actions + a]; }
};

/// Boltzmann policy pi(a | h), H x A, rows on the simplex.
struct PolicyTable {
  Index num_histories = 0;
  Index num_actions = 0;
  std::vector<double> probs;
  std::vector<double> log_probs;

  double operator()(Index h, Index a) const { return probs[h * num_actions + a]; }
  double log_prob(Index h, Index a) const { return log_probs[h * num_actions + a]; }
  std::span<const double> row(Index h) const {
    return {probs.data() + h * num_actions, num_actions};
  }
};

struct SoftQOptions {
  int max_iters = 200;
  double tol = 1e-10;
  /// After each sweep, shift Q by the midpoint of the fixed-point bounds
  /// gamma/(1-gamma) * [min, max] of the update. This leaves the fixed point
  /// unchanged and removes the slow constant error mode.
  bool extrapolate = true;
  /// Anderson acceleration depth; 0 gives plain sweeps. Each iteration still
  /// applies the Bellman operator once. The history is dropped whenever the
  /// residual grows.
  int anderson_memory = 5;
};

/// One soft Bellman sweep:
///   T(Q)(h,a) = r(h,a) + gamma * sum_h' P(h'|h,a) * alpha * log sum_a' exp(Q(h',a')/alpha)
void soft_bellman_sweep(std::span<const double> reward, const AugmentedKernel& kernel,
                        double gamma, double alpha, std::span<const double> q,
                        std::span<double> out);

/// Soft value V(h) = alpha * log sum_a exp(Q(h,a)/alpha).
std::vector<double> soft_value(std::span<const double> q, Index num_actions,
                               double alpha);

/// Fixed-point iteration of the soft Bellman operator from Q = 0.
///
/// Stops when the sup-norm of an update drops below options.tol or after
/// options.max_iters sweeps, returning the last Bellman image. Throws
/// InvalidArgument on a non-finite reward or an out-of-range gamma/alpha.
QTable soft_q_iterate(std::span<const double> reward, const AugmentedKernel& kernel,
                      double gamma, double alpha, const SoftQOptions& options = {});

PolicyTable boltzmann_policy(const QTable& q, double alpha);

/// Gradient of sum_{h,a} weight(h,a) * log pi(a|h) with respect to the reward,
/// taken through the soft-Q fixed point of `q`.
///
/// Solves the adjoint system lambda = g + gamma * (P Pi)^T lambda where
/// g(h,a) = (weight(h,a) - pi(a|h) * sum_a' weight(h,a')) / alpha.
std::vector<double> policy_reward_gradient(std::span<const double> weight,
                                           const PolicyTable& policy,
                                           const AugmentedKernel& kernel,
                                           double gamma, double alpha,
                                           int max_iters = 5000, double tol = 1e-12);

}  // namespace swirl
