#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "swirl/inference.hpp"
#include "swirl/model.hpp"
#include "swirl/soft_q.hpp"

namespace swirl {

/// I-variants tie P_z across states; S-variants condition it on s_t.
enum class TransitionVariant { kStateIndependent, kStateDependent };

enum class Optimizer { kGradientAscent, kAdam };

struct FitConfig {
  TransitionVariant variant = TransitionVariant::kStateDependent;
  Index history_len = 1;
  Index num_modes = 2;
  double gamma = 0.95;
  double alpha = 0.1;
  int em_iters = 100;
  int softq_iters = 200;
  double softq_tol = 1e-8;
  Optimizer optimizer = Optimizer::kAdam;
  /// eta_k = learning_rate / (1 + lr_decay * k), applied to the per-timestep
  /// objective.
  double learning_rate = 0.05;
  double lr_decay = 0.0;
  int m_step_steps = 10;
  /// Halvings tried before an M-step step that would lower G is dropped.
  int max_backtracks = 10;
  /// When false the reward is r_z(h) shared across actions.
  bool reward_on_action = false;
  /// Precision of a zero-mean Gaussian prior on each reward parameter
  /// (MAP-EM); 0 gives maximum likelihood.
  double reward_l2 = 60.0;
  /// Radius of an L2 ball each mode's reward parameters are kept in; M-step
  /// steps are projected onto it. 0 leaves rewards unconstrained.
  double reward_max_norm = 0.0;
  /// Dirichlet pseudo-count on the self-transition of every row (z, s) of
  /// the mode transition table. Favors persistent modes; 0 disables it.
  double transition_stickiness = 0.0;
  /// S-variants keep the transition tied across states for this many initial
  /// EM iterations before untying it.
  int tied_warmup = 20;
  /// Added to the diagonal of the initial transition logits, so fits start
  /// from persistent modes instead of modes that flip every step.
  double sticky_init = 3.0;
  std::uint64_t seed = 0;
  /// Early stop once |delta train LL| < tolerance for `patience` iterations.
  double tolerance = 1e-5;
  int patience = 3;
  std::size_t workers = 1;

  /// Throws InvalidArgument.
  void validate() const;
  /// "I-1", "S-2", ...
  std::string variant_name() const;
};

/// Parses "I-2"/"S-1" style names into variant and history length.
std::pair<TransitionVariant, Index> parse_variant_name(const std::string& name);

struct FitResult {
  DiscreteHmMdp model;
  FitConfig config;
  std::vector<double> train_ll_trace;
  std::vector<double> aux_trace;
  /// Train LL plus the reward log-prior; the quantity generalized EM never lowers.
  std::vector<double> objective_trace;
  std::uint64_t seed = 0;
  bool converged = false;

  double final_train_ll() const;
};

/// Components of the EM auxiliary function G summed over trajectories.
struct AuxiliaryTerms {
  double init_mode = 0.0;
  double policy = 0.0;
  double mode_transition = 0.0;
  /// log p(s_1) and environment kernel terms; fixed during optimization.
  double constant = 0.0;

  double optimizable() const { return init_mode + policy + mode_transition; }
  double total() const { return optimizable() + constant; }
};

/// Posterior-weighted counts that G depends on.
struct SufficientStats {
  Index num_modes = 0;
  Index num_histories = 0;
  Index num_states = 0;
  Index num_actions = 0;
  std::vector<double> action_weight;  // Z x H x A: sum_t p(z_t=z) [h_t=h, a_t=a]
  std::vector<double> transition;     // Z x S x Z: sum_t p(z_t=z, z_{t+1}=z') [s_t=s]
  std::vector<double> initial;        // Z: sum_n p(z_{n,1}=z)
  double constant = 0.0;
  double total_steps = 0.0;
};

SufficientStats sufficient_statistics(const DiscreteHmMdp& theta,
                                      std::span<const ModePosteriors> posteriors,
                                      std::span<const Trajectory> data);

/// Per-mode Boltzmann policies of the soft-Q solution for theta's rewards.
std::vector<PolicyTable> solve_policies(const DiscreteHmMdp& theta,
                                        const AugmentedKernel& kernel,
                                        const SoftQOptions& options = {},
                                        std::size_t workers = 1);

AuxiliaryTerms auxiliary_G(const DiscreteHmMdp& theta,
                           std::span<const PolicyTable> policies,
                           std::span<const ModePosteriors> posteriors,
                           std::span<const Trajectory> data);

/// G evaluated from sufficient statistics.
AuxiliaryTerms auxiliary_G(const DiscreteHmMdp& theta,
                           std::span<const PolicyTable> policies,
                           const SufficientStats& stats);

struct EStepResult {
  std::vector<PolicyTable> policies;
  std::vector<ModePosteriors> posteriors;
  AuxiliaryTerms aux;
  /// Sum of parameter-dependent trajectory log-likelihoods.
  double train_ll = 0.0;
  /// Sum of full trajectory log-likelihoods (environment terms included).
  double total_ll = 0.0;
};

EStepResult e_step(const DiscreteHmMdp& theta, std::span<const Trajectory> data,
                   const SoftQOptions& options = {}, std::size_t workers = 1);

/// Gradient of the optimizable part of G minus the reward penalty, one block
/// per parameter group.
struct ParameterGradient {
  std::vector<double> rewards;     // Z x H x A, or Z x H when rewards ignore actions
  std::vector<double> transition;  // Z x S x Z, or Z x Z when tied
  std::vector<double> init;        // Z
};

ParameterGradient objective_gradient(const DiscreteHmMdp& theta,
                                     const SufficientStats& stats,
                                     const FitConfig& config);

/// 0.5 * reward_l2 * sum of squared reward parameters.
double reward_penalty(const DiscreteHmMdp& theta, const FitConfig& config);

/// -transition_stickiness * sum over rows (z, s) of log P(z | z, s).
double transition_penalty(const DiscreteHmMdp& theta, const FitConfig& config);

/// reward_penalty + transition_penalty.
double prior_penalty(const DiscreteHmMdp& theta, const FitConfig& config);

/// Optimizable part of G minus the prior penalty, solving soft-Q for theta's rewards.
double optimizable_objective(const DiscreteHmMdp& theta, const SufficientStats& stats,
                             const FitConfig& config);

/// Optimizer memory that persists across M-steps of one fit.
struct MStepState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  long long step = 0;
  int em_iteration = 0;
};

/// Gradient ascent on G with step acceptance; never lowers G.
DiscreteHmMdp m_step(const DiscreteHmMdp& theta,
                     std::span<const ModePosteriors> posteriors,
                     std::span<const Trajectory> data, const FitConfig& config,
                     MStepState* state = nullptr);

/// Seeded initial parameters: rewards ~ N(0, 0.1^2), logits ~ N(0, 1),
/// p(s_1) = empirical first-state frequency.
DiscreteHmMdp initialize_parameters(std::span<const Trajectory> data,
                                    const EnvKernel& env, const FitConfig& config);

FitResult fit(std::span<const Trajectory> data, const EnvKernel& env,
              const FitConfig& config);

/// Fits seeds config.seed + 0..num_seeds-1 and returns the keep_top results
/// with the highest final train log-likelihood, best first.
std::vector<FitResult> multi_seed_fit(std::span<const Trajectory> data,
                                      const EnvKernel& env, const FitConfig& config,
                                      int num_seeds, int keep_top);

/// Every seed's result in seed order (no ranking).
std::vector<FitResult> fit_seeds(std::span<const Trajectory> data, const EnvKernel& env,
                                 const FitConfig& config, int num_seeds);

/// Top keep_top results by final train LL; ties keep seed order.
std::vector<FitResult> select_top(std::vector<FitResult> results, int keep_top);

}  // namespace swirl
