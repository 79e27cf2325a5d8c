// SPDX-License-Identifier: Apache-2.0
//
// Experiment runs driven by an ExperimentConfig. Every run writes into its
// own directory: resolved_config.txt, metrics.csv, trace.csv,
// trace_summary.csv, checkpoint.bin and summary.json.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "cen/synthdata.hpp"
#include "cen/trainer.hpp"
#include "cencli/config.hpp"

namespace cencli {

struct RunResult {
  std::string name;
  std::uint64_t seed = 0;
  std::uint64_t steps = 0;
  double final_total = 0;                     // last training objective
  cen::EvalMetrics metrics;                   // validation split
  std::map<std::string, double> fractions;    // exchanged fraction per layer
  std::size_t fallen = 0;                     // non-recovery statistic
  std::size_t recovered = 0;

  /// Ensemble validation loss of task 0.
  double ensemble_loss() const;
};

/// Generates the configured dataset, or loads `data_file` when set.
cen::Dataset obtain_dataset(const ExperimentConfig& config);

/// Keeps only the listed modalities (all when empty).
cen::Dataset select_modalities(const cen::Dataset& data, const std::vector<std::size_t>& modalities);

/// Throws ConfigError when topology, variant and data do not fit together.
void check_compatibility(const ExperimentConfig& config, const cen::Dataset& data);

/// Builds the model a config describes for a (modality-selected) dataset.
template <typename T>
cen::ModelAssembly<T> build_for(const ExperimentConfig& config, const cen::Dataset& data);

/// Trains from scratch and writes the run directory.
RunResult run_training(const ExperimentConfig& config, const cen::Dataset& data,
                       const std::filesystem::path& out, const std::string& name = "train");

/// Restores a checkpoint (its config echo rebuilds the model) and evaluates
/// the validation split.
RunResult run_evaluation(const std::filesystem::path& checkpoint, const cen::Dataset& data);

/// Reads the configuration echo stored in a checkpoint.
ExperimentConfig checkpoint_config(const std::filesystem::path& checkpoint);

nlohmann::json to_json(const RunResult& result);

/// Ablation rows understood by `ablate`.
std::vector<std::string> ablation_rows(std::size_t modalities);

/// Applies one ablation row to a base configuration.
ExperimentConfig apply_row(ExperimentConfig config, const std::string& row);

/// Writes text to a file, replacing it.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace cencli
