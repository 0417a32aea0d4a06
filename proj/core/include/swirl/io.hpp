#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "swirl/environments.hpp"
#include "swirl/model.hpp"
#include "swirl/trainer.hpp"

namespace swirl {

inline constexpr const char* kModelFormat = "swirl-model/1";
inline constexpr const char* kFitFormat = "swirl-fit/1";
inline constexpr const char* kTrajFormat = "swirl-traj/1";
inline constexpr const char* kTruthFormat = "swirl-truth/1";

std::string model_to_json(const DiscreteHmMdp& model);
/// Throws DataError on a malformed document or a wrong format tag.
DiscreteHmMdp model_from_json(const std::string& text);

std::string fit_result_to_json(const FitResult& result);
FitResult fit_result_from_json(const std::string& text);

std::string fit_config_to_json(const FitConfig& config);
FitConfig fit_config_from_json(const std::string& text);

std::string ground_truth_to_json(const DiscreteHmMdp& model, const GroundTruth& truth);
std::pair<DiscreteHmMdp, GroundTruth> ground_truth_from_json(const std::string& text);

/// One swirl-traj/1 file: optional header plus one trajectory per line.
struct TrajectoryFile {
  std::vector<Trajectory> trajectories;
  /// Per-trajectory hidden labels; empty when the file carries none.
  std::vector<std::vector<Index>> labels;
  std::optional<Index> declared_states;
  std::optional<Index> declared_actions;
  std::optional<std::string> split;
};

/// Byte-stable export. Header is written when sizes are given.
std::string trajectories_to_jsonl(std::span<const Trajectory> data,
                                  std::span<const std::vector<Index>> labels,
                                  std::optional<Index> num_states,
                                  std::optional<Index> num_actions,
                                  std::optional<std::string> split = std::nullopt);

TrajectoryFile parse_trajectories(const std::string& text);

/// Trajectories plus the spaces they live in (S and A declared or max + 1).
struct IngestedData {
  TrajectoryFile file;
  Index num_states = 0;
  Index num_actions = 0;
};

/// Reads and validates a swirl-traj/1 file. Throws DataError naming the line.
IngestedData ingest_trajectories(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
/// Writes through a temporary file and rename, so readers never see a partial file.
void write_text_file(const std::filesystem::path& path, const std::string& text);

/// 64-bit FNV-1a digest as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace swirl
