// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration: an INI-style file with the sections
// [experiment], [data], [model], [train] and [sweep]. Every key is optional;
// unknown sections or keys are rejected with the offending line number.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cen/exchange.hpp"
#include "cen/models.hpp"
#include "cen/synthdata.hpp"
#include "cen/trainer.hpp"

namespace cencli {

enum class Precision { f32, f64 };

struct ExperimentConfig {
  // [experiment]
  cen::Topology topology = cen::Topology::multimodal;
  cen::Fusion fusion = cen::Fusion::exchange;
  cen::VariantKind variant = cen::VariantKind::threshold;
  double variant_fraction = 0.3;
  bool share_convs = true;
  bool share_norms = false;
  cen::Partition partition = cen::Partition::divided;
  cen::ThresholdRule rule = cen::ThresholdRule::magnitude;
  bool cycle_shared_decoder = true;
  Precision precision = Precision::f32;

  // [data]
  cen::TaskKind task = cen::TaskKind::fusion_regression;
  std::size_t n_train = 256;
  std::size_t n_val = 64;
  std::uint64_t data_seed = 1;
  cen::DataParams data{};
  std::string data_file;  // empty: generate from the settings above

  // [model]
  cen::NetSpec net{};
  std::vector<std::size_t> modalities;  // empty: all dataset modalities

  // [train]; lambda/theta left unset follow the task's regime
  cen::TrainConfig train{};
  bool lambda_set = false;
  bool theta_set = false;

  // [sweep]
  std::vector<double> sweep_lambdas{1e-4, 1e-3, 1e-2};
  std::vector<double> sweep_thetas;  // empty: the configured theta

  /// Fills regime-dependent defaults (λ, θ) from the task kind.
  void resolve();
};

/// Parses config text. Throws cen::ParseError with the 1-based line of the
/// first unknown key, malformed value or violated constraint.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Canonical text of a resolved configuration. Parsing the echo yields the
/// same configuration, and echoing again yields the same text.
std::string echo_config(const ExperimentConfig& config);

/// Regime defaults: segmentation-style tasks (λ=5e-3, θ=2e-2), regression
/// tasks (λ=1e-3, θ=1e-2).
double default_lambda(cen::TaskKind task);
double default_theta(cen::TaskKind task);

/// Shortest decimal text that reads back to the same double.
std::string format_number(double v);

}  // namespace cencli
