#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "swirl/evaluation.hpp"
#include "swirl/inference.hpp"
#include "swirl/model.hpp"
#include "swirl/trainer.hpp"

namespace swirl {

/// Single-mode MaxEnt IRL: the SWIRL trainer with Z = 1 and L = 1.
FitResult fit_maxent(std::span<const Trajectory> data, const EnvKernel& env,
                     FitConfig config);

enum class ArhmmVariant { kPlain, kRecurrent };

/// Categorical AR(1) hidden Markov model over state sequences.
struct ArhmmModel {
  Index num_modes = 0;
  Index num_states = 0;
  ArhmmVariant variant = ArhmmVariant::kPlain;
  std::vector<double> emission;  // Z x S x S, row (z, s) is p(s' | s, z)
  ModeTransition mode_transition;
  std::vector<double> init_mode;
  std::vector<double> init_state;

  double emission_prob(Index z, Index s, Index next) const {
    return emission[(z * num_states + s) * num_states + next];
  }
};

struct ArhmmConfig {
  Index num_modes = 2;
  ArhmmVariant variant = ArhmmVariant::kPlain;
  int em_iters = 100;
  double smoothing = 1e-6;
  double tolerance = 1e-8;
  std::uint64_t seed = 0;
  /// Used by the recurrent variant's gradient update of transition logits.
  FitConfig logits;
};

struct ArhmmFit {
  ArhmmModel model;
  /// Data log-likelihood per EM iteration.
  std::vector<double> train_ll_trace;
  /// Log-likelihood plus the smoothing prior, the quantity EM never lowers.
  std::vector<double> objective_trace;
  std::uint64_t seed = 0;
  bool converged = false;
};

/// Posteriors of one state sequence; emission at the last step is 1.
ModePosteriors arhmm_posteriors(std::span<const Index> states, const ArhmmModel& model);

double arhmm_log_likelihood(std::span<const Index> states, const ArhmmModel& model);

ArhmmFit fit_arhmm(std::span<const std::vector<Index>> sequences, Index num_states,
                   const ArhmmConfig& config);

std::vector<std::vector<Index>> state_sequences(std::span<const Trajectory> data);

/// States of a deterministic-environment trajectory followed by the state the
/// final action leads to.
std::vector<Index> state_sequence_with_successor(const Trajectory& traj,
                                                 const EnvKernel& env);

/// ARHMM emitting p(s' | s, z) = sum_a P(s' | s, a) pi_z(a | s) from an L = 1
/// SWIRL model, sharing its mode transition and initial distributions.
ArhmmModel arhmm_from_policies(const DiscreteHmMdp& model,
                               std::span<const PolicyTable> policies);

struct ComparisonRow {
  std::string model;
  std::string variant;
  Index history_len = 1;
  Index num_modes = 1;
  double median_test_ll = 0.0;
  double iqr_test_ll = 0.0;
};

/// Median and IQR of test LL per (model, variant, L, Z), best first, ties by name.
std::vector<ComparisonRow> compare_models(std::span<const FitReport> reports);

/// model,variant,L,Z,median_test_ll,iqr_test_ll
std::string comparison_to_csv(std::span<const ComparisonRow> rows);

}  // namespace swirl
