// SPDX-License-Identifier: Apache-2.0
//
// Training loop: per-stream task losses plus the L1 term on scaling factors,
// one momentum-SGD step on subnetwork parameters, then one step on the
// decision scores with the subnetworks frozen.
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cen/models.hpp"
#include "cen/optimizer.hpp"
#include "cen/synthdata.hpp"
#include "cen/trace.hpp"

namespace cen {

struct TrainConfig {
  double lr_encoder = 0.05;
  double lr_decoder = 0.05;
  double lr_scores = 0.05;
  double momentum = 0.9;
  double weight_decay = 1e-5;
  double lambda = 1e-3;
  double theta = 1e-2;
  std::size_t batch_size = 8;
  std::size_t epochs = 60;
  std::size_t lr_decay_epoch = 30;  // 0 disables the decay
  double lr_decay_factor = 0.5;
  std::uint64_t seed = 0;
  std::size_t trace_every = 0;      // steps; 0 disables tracing
  bool random_flow = false;         // cycle: one random task per step

  /// Throws ConfigError naming the first violated constraint.
  void validate() const;
};

struct StepRecord {
  std::uint64_t step = 0;
  std::size_t epoch = 0;
  std::vector<double> stream_losses;   // per model stream; NaN if not run
  std::vector<double> ensemble_losses; // per task; NaN if not run
  std::vector<double> ensemble_miou;   // per task; NaN for regression
  double sparsity = 0;
  double total = 0;
};

struct StreamMetrics {
  std::size_t stream = 0;
  std::size_t modality = 0;
  double loss = 0;
  double mse = 0;
  double mae = 0;
  double miou = 0;  // segmentation only
};

struct TaskMetrics {
  std::size_t task = 0;
  bool segmentation = false;
  std::vector<StreamMetrics> streams;
  StreamMetrics ensemble;
  std::vector<double> alpha;
};

struct EvalMetrics {
  std::vector<TaskMetrics> tasks;
};

/// Maps a model onto a dataset: modalities of both agree in order and the
/// model's tasks are the dataset's targets.
std::vector<TaskSpec> task_specs(const Dataset& data);

template <typename T>
class Trainer {
 public:
  Trainer(ModelAssembly<T>& model, TrainConfig config);

  /// One optimisation step on a batch.
  StepRecord train_step(const SampleBatch<T>& batch);

  /// Batches of one epoch in order; the permutation depends only on
  /// (seed, epoch).
  std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n_train, std::size_t epoch) const;

  /// Runs the remaining steps of the schedule. `on_step` sees every record;
  /// traces are taken before step 1 and then every trace_every steps.
  /// `max_steps` stops early (used to split runs across checkpoints).
  void fit(const Dataset& data, const std::function<void(const StepRecord&)>& on_step = {},
           const std::function<void(const ChannelTrace&)>& on_trace = {},
           std::optional<std::uint64_t> max_steps = std::nullopt);

  std::uint64_t step() const { return step_; }
  void set_step(std::uint64_t step) { step_ = step; }
  /// Epoch used by the learning-rate schedule for direct train_step calls.
  void set_epoch(std::size_t epoch) { epoch_of_step_ = epoch; }
  std::size_t steps_per_epoch(std::size_t n_train) const;
  T lr_scale(std::size_t epoch) const;

  Sgd<T>& optimizer() { return optimizer_; }
  const Sgd<T>& optimizer() const { return optimizer_; }
  ModelAssembly<T>& model() { return model_; }
  const TrainConfig& config() const { return config_; }

 private:
  ModelAssembly<T>& model_;
  TrainConfig config_;
  Sgd<T> optimizer_;
  std::uint64_t step_ = 0;
  std::size_t epoch_of_step_ = 0;
};

/// Frozen evaluation of a split in inference mode, in chunks of
/// `chunk` samples reduced in index order.
template <typename T>
EvalMetrics evaluate(ModelAssembly<T>& model, const Dataset& data, Split split,
                     std::size_t chunk = 64);

/// Inputs a task's streams consume, taken from per-modality batch inputs.
template <typename T>
std::vector<Tensor<T>> task_inputs(const ModelAssembly<T>& model,
                                   const std::vector<Tensor<T>>& modality_inputs, std::size_t task);

}  // namespace cen
