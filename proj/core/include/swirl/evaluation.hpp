#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "swirl/environments.hpp"
#include "swirl/model.hpp"
#include "swirl/soft_q.hpp"
#include "swirl/trainer.hpp"

namespace swirl {

struct HeldoutLL {
  double mean_per_trajectory = 0.0;
  double mean_per_step = 0.0;
  std::vector<double> per_trajectory;
};

/// Mean sequence log-likelihood over test trajectories. Throws InvalidArgument
/// on an empty test set.
HeldoutLL heldout_ll(const DiscreteHmMdp& model, std::span<const PolicyTable> policies,
                     std::span<const Trajectory> test);
HeldoutLL heldout_ll(const DiscreteHmMdp& model, std::span<const Trajectory> test,
                     const SoftQOptions& options = {});

/// Pearson correlation; zero-variance input yields 0 and sets *degenerate.
double pearson(std::span<const double> x, std::span<const double> y,
               bool* degenerate = nullptr);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

/// Assignment maximizing the total score of a rows x cols matrix. Returns the
/// column of each row, or -1 for rows left unassigned when rows > cols.
std::vector<long> max_weight_assignment(std::span<const double> score, Index rows,
                                        Index cols);

/// Learned-to-truth mode correspondence used by every metric of one report.
struct ModeMatching {
  std::vector<Index> learned_to_truth;
  std::vector<Index> truth_to_learned;
};

/// Re-expresses a reward table on a longer history: r'(h', a) = r(suffix(h'), a).
RewardTable lift_rewards(const RewardTable& rewards, Index num_states, Index from_len,
                         Index to_len);

struct RewardCorrelation {
  std::vector<double> per_mode;  // indexed by truth mode
  std::vector<bool> degenerate;
  /// Plain Pearson on the unprojected entries, same matching.
  std::vector<double> per_mode_raw;
  ModeMatching matching;
};

/// Removes from a flattened H x A reward vector (restricted to the entries
/// where mask is 1) its component along the shaping terms
///   phi(oldest L-1 states of h) - gamma * phi(newest L-1 states of h)
/// and constants. Adding such a term changes no soft-optimal policy, so the
/// remainder is the policy-relevant part of the reward.
std::vector<double> project_out_shaping(std::span<const double> values,
                                        std::span<const unsigned char> mask,
                                        Index num_states, Index history_len,
                                        Index num_actions, double gamma);

/// Per-mode Pearson correlation between learned and true rewards after lifting
/// both to the longer history and aligning modes by maximum total correlation.
/// A non-empty history_mask restricts the comparison to histories marked 1.
/// With shaping_gamma set, both tables are first passed through
/// project_out_shaping so that equivalent rewards correlate perfectly.
RewardCorrelation reward_correlation(const RewardTable& learned, Index learned_len,
                                     const RewardTable& truth, Index truth_len,
                                     Index num_states,
                                     std::span<const unsigned char> history_mask = {},
                                     std::optional<double> shaping_gamma = std::nullopt);

/// Matching that maximizes label agreement.
ModeMatching best_accuracy_matching(std::span<const std::vector<Index>> predicted,
                                    std::span<const std::vector<Index>> truth,
                                    Index learned_modes, Index true_modes);

/// Mean over trajectories of the fraction of matched labels equal to the truth.
double segmentation_accuracy(std::span<const std::vector<Index>> predicted,
                             std::span<const std::vector<Index>> truth,
                             const ModeMatching& matching);

/// Quantile with linear interpolation between order statistics (numpy default).
double quantile_linear(std::span<const double> sorted, double p);

struct IqrSummary {
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double iqr = 0.0;
  std::vector<double> kept;
  std::vector<double> outliers;
};

/// Values above Q3 + 1.5 IQR or below Q1 - 1.5 IQR are outliers. Needs >= 4 values.
IqrSummary iqr_outliers(std::span<const double> values);

/// Per-fit evaluation record.
struct FitReport {
  std::string model;    // "SWIRL", "MaxEnt", "ARHMM", ...
  std::string variant;  // "S", "I", ...
  Index history_len = 1;
  Index num_modes = 1;
  std::uint64_t seed = 0;
  double fraction = 0.0;
  double train_ll = 0.0;
  double test_ll = 0.0;
  double test_ll_per_step = 0.0;
  std::optional<std::vector<double>> reward_corr;
  std::optional<std::vector<double>> reward_corr_raw;
  std::optional<double> segmentation_accuracy;

  std::string label() const;  // "S-2-Z2", "MaxEnt", ...
  double mean_reward_corr() const;
};

struct EvaluationInputs {
  std::span<const Trajectory> test;
  /// Hidden test labels; empty when unknown.
  std::span<const std::vector<Index>> test_labels;
  /// Present in simulation mode.
  const DiscreteHmMdp* truth_model = nullptr;
  const GroundTruth* truth = nullptr;
};

FitReport evaluate_fit(const FitResult& fit, const std::string& model_name,
                       const EvaluationInputs& inputs, double fraction = 0.0,
                       const SoftQOptions& options = {});

/// Fixed column order: model,variant,L,Z,seed,fraction,train_ll,test_ll,
/// test_ll_per_step[,reward_corr_mean,reward_corr,reward_corr_raw]
/// [,segmentation_accuracy].
/// Optional columns are present when every record carries them.
std::string reports_to_csv(std::span<const FitReport> reports);
std::vector<FitReport> reports_from_csv(const std::string& text);

struct MetricAggregate {
  std::string label;
  double fraction = 0.0;
  IqrSummary test_ll;
  std::optional<IqrSummary> reward_corr;
  std::optional<IqrSummary> segmentation_accuracy;
};

/// Groups by (label, fraction) in first-appearance order. Groups with fewer
/// than 4 records report quartiles without outlier screening.
std::vector<MetricAggregate> aggregate_reports(std::span<const FitReport> reports);

/// "swirl-report/1" JSON document.
std::string aggregate_to_json(std::span<const MetricAggregate> aggregates,
                              std::span<const FitReport> reports);

struct RobustnessPoint {
  double fraction = 0.0;
  std::vector<FitReport> reports;
};

struct RobustnessInputs {
  std::span<const Trajectory> train;
  EvaluationInputs eval;
  const EnvKernel* env = nullptr;
  FitConfig config;
  int num_seeds = 20;
  int keep_top = 10;
  std::uint64_t perturb_seed = 0;
  std::size_t workers = 1;
  /// Precomputed unperturbed fits reused for fraction 0 when present.
  std::span<const FitResult> fraction_zero_fits;
};

/// Perturbs the training data at each fraction, refits, and evaluates.
std::vector<RobustnessPoint> robustness_sweep(std::span<const double> fractions,
                                              const RobustnessInputs& inputs);

/// One row per fraction: fraction,median_test_ll,median_reward_corr,median_accuracy.
std::string robustness_to_csv(std::span<const RobustnessPoint> curve);

}  // namespace swirl
