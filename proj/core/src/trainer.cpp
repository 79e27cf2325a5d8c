// SPDX-License-Identifier: Apache-2.0
#include "cen/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cen/error.hpp"
#include "cen/metrics.hpp"
#include "cen/ops.hpp"
#include "cen/random.hpp"

namespace cen {

namespace {

constexpr std::uint64_t kTagShuffle = 0x5348554646ULL;
constexpr std::uint64_t kTagFlow = 0x464c4f57ULL;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

template <typename T>
bool all_finite(std::span<const T> v) {
  return std::all_of(v.begin(), v.end(), [](T x) { return std::isfinite(x); });
}

template <typename T>
std::vector<std::int32_t> labels_of(const Tensor<T>& target) {
  std::vector<std::int32_t> out(target.numel());
  const auto v = target.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::int32_t>(std::lround(v[i]));
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  require(lr_encoder >= 0, "lr_encoder must be >= 0");
  require(lr_decoder >= 0, "lr_decoder must be >= 0");
  require(lr_scores >= 0, "lr_scores must be >= 0");
  require(momentum >= 0 && momentum < 1, "momentum must be in [0, 1)");
  require(weight_decay >= 0, "weight_decay must be >= 0");
  require(lambda >= 0, "lambda must be >= 0");
  require(theta >= 0, "theta must be >= 0");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(epochs >= 1, "epochs must be >= 1");
  require(lr_decay_factor > 0, "lr_decay_factor must be > 0");
}

std::vector<TaskSpec> task_specs(const Dataset& data) {
  std::vector<TaskSpec> out;
  for (const auto& t : data.targets_spec)
    out.push_back({t.segmentation ? TaskLoss::segmentation : TaskLoss::regression, t.classes});
  return out;
}

template <typename T>
std::vector<Tensor<T>> task_inputs(const ModelAssembly<T>& model,
                                   const std::vector<Tensor<T>>& modality_inputs,
                                   std::size_t task) {
  if (modality_inputs.size() != model.num_modalities)
    throw ValidationError("expected " + std::to_string(model.num_modalities) +
                          " modality inputs, got " + std::to_string(modality_inputs.size()));
  std::vector<Tensor<T>> out;
  for (auto s : model.task_streams(task)) out.push_back(modality_inputs[model.streams[s].modality]);
  return out;
}

template <typename T>
Trainer<T>::Trainer(ModelAssembly<T>& model, TrainConfig config)
    : model_(model), config_(config), optimizer_(static_cast<T>(config.momentum)) {
  config_.validate();
  model_.options.theta = config_.theta;
  for (const auto& p : model_.parameters()) {
    if (p.role == ParamRole::score_logit) continue;
    const double lr = p.side == ParamSide::encoder ? config_.lr_encoder : config_.lr_decoder;
    const bool decay = p.role == ParamRole::conv_weight || p.role == ParamRole::fusion_weight;
    optimizer_.add(p.name, p.tensor, static_cast<T>(lr),
                   static_cast<T>(decay ? config_.weight_decay : 0.0));
  }
}

template <typename T>
std::size_t Trainer<T>::steps_per_epoch(std::size_t n_train) const {
  return (n_train + config_.batch_size - 1) / config_.batch_size;
}

template <typename T>
T Trainer<T>::lr_scale(std::size_t epoch) const {
  if (config_.lr_decay_epoch == 0) return T(1);
  const auto drops = epoch / config_.lr_decay_epoch;
  return static_cast<T>(std::pow(config_.lr_decay_factor, static_cast<double>(drops)));
}

template <typename T>
std::vector<std::vector<std::size_t>> Trainer<T>::epoch_batches(std::size_t n_train,
                                                                std::size_t epoch) const {
  std::vector<std::size_t> perm(n_train);
  for (std::size_t i = 0; i < n_train; ++i) perm[i] = i;
  CounterRng rng(derive(derive(config_.seed, kTagShuffle), epoch));
  for (std::size_t i = n_train; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t b = 0; b < n_train; b += config_.batch_size)
    batches.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(b),
                         perm.begin() + static_cast<std::ptrdiff_t>(
                                            std::min(n_train, b + config_.batch_size)));
  return batches;
}

template <typename T>
StepRecord Trainer<T>::train_step(const SampleBatch<T>& batch) {
  auto& model = model_;
  if (batch.targets.size() != model.num_tasks)
    throw ValidationError("batch carries " + std::to_string(batch.targets.size()) +
                          " targets, model has " + std::to_string(model.num_tasks) + " tasks");
  StepRecord rec;
  rec.step = step_ + 1;
  rec.stream_losses.assign(model.streams.size(), kNaN);
  rec.ensemble_losses.assign(model.num_tasks, kNaN);
  rec.ensemble_miou.assign(model.num_tasks, kNaN);

  optimizer_.zero_grad();
  std::vector<TaskOutput<T>> outs;
  if (model.topology == Topology::cycle && config_.random_flow) {
    CounterRng rng(derive(derive(config_.seed, kTagFlow), step_));
    const auto task = static_cast<std::size_t>(rng.below(model.num_tasks));
    const auto inputs = task_inputs(model, batch.inputs, task);
    outs.push_back(forward(model, std::span<const Tensor<T>>(inputs), task, true));
  } else {
    outs = forward_all(model, std::span<const Tensor<T>>(batch.inputs), true).tasks;
  }

  Tensor<T> total;
  for (const auto& out : outs)
    for (std::size_t k = 0; k < out.streams.size(); ++k) {
      auto l = task_loss(model.tasks[out.task].loss, out.predictions[k], batch.targets[out.task]);
      rec.stream_losses[out.streams[k]] = static_cast<double>(l.item());
      total = total.defined() ? add(total, l) : l;
    }
  const auto terms = sparsity_terms(model);
  if (config_.lambda > 0 && !terms.empty()) {
    auto sp = sparsity_penalty(std::span<const SparsityTerm<T>>(terms), static_cast<T>(config_.lambda));
    rec.sparsity = static_cast<double>(sp.item());
    total = add(total, sp);
  }
  rec.total = static_cast<double>(total.item());

  const auto params = model.parameters();
  if (!std::isfinite(rec.total)) {
    for (const auto& p : params)
      if (!all_finite(p.tensor.values()))
        throw NumericError("non-finite loss at step " + std::to_string(rec.step) +
                           "; first non-finite parameter: " + p.name);
    backward(total);
    for (const auto& p : params)
      if (p.tensor.has_grad() && !all_finite(p.tensor.grad()))
        throw NumericError("non-finite loss at step " + std::to_string(rec.step) +
                           "; first parameter with a non-finite gradient: " + p.name);
    throw NumericError("non-finite loss at step " + std::to_string(rec.step) +
                       " with finite parameters and gradients");
  }
  backward(total);

  // The schedule is indexed by the epoch of this step.
  const T scale = lr_scale(epoch_of_step_);
  optimizer_.step(scale);
  rec.epoch = epoch_of_step_;

  std::vector<Tensor<T>> targets;
  for (const auto& out : outs) {
    std::vector<Tensor<T>> frozen;
    for (const auto& p : out.predictions) frozen.push_back(p.detach());
    auto ens = ensemble(std::span<const Tensor<T>>(frozen), model.score_logits[out.task].detach());
    const auto kind = model.tasks[out.task].loss;
    rec.ensemble_losses[out.task] =
        static_cast<double>(task_loss(kind, ens, batch.targets[out.task]).item());
    if (kind == TaskLoss::segmentation) {
      const auto pred = argmax_channels(ens);
      const auto gt = labels_of(batch.targets[out.task]);
      rec.ensemble_miou[out.task] = mean_iou(pred, gt, model.tasks[out.task].out_channels);
    }
    targets.push_back(batch.targets[out.task]);
  }
  update_decision_scores(model, std::span<const TaskOutput<T>>(outs),
                         std::span<const Tensor<T>>(targets),
                         static_cast<T>(config_.lr_scores) * scale);
  optimizer_.zero_grad();
  ++step_;
  return rec;
}

template <typename T>
void Trainer<T>::fit(const Dataset& data, const std::function<void(const StepRecord&)>& on_step,
                     const std::function<void(const ChannelTrace&)>& on_trace,
                     std::optional<std::uint64_t> max_steps) {
  const std::size_t spe = steps_per_epoch(data.n_train);
  const std::uint64_t total = static_cast<std::uint64_t>(spe) * config_.epochs;
  const bool tracing = config_.trace_every > 0 && on_trace;
  if (tracing && step_ == 0) on_trace(record_trace(model_, 0));
  std::uint64_t done = 0;
  std::size_t cached_epoch = static_cast<std::size_t>(-1);
  std::vector<std::vector<std::size_t>> batches;
  while (step_ < total && (!max_steps || done < *max_steps)) {
    const auto epoch = static_cast<std::size_t>(step_ / spe);
    if (epoch != cached_epoch) {
      batches = epoch_batches(data.n_train, epoch);
      cached_epoch = epoch;
    }
    epoch_of_step_ = epoch;
    const auto& idx = batches[static_cast<std::size_t>(step_ % spe)];
    const auto batch = make_batch<T>(data, Split::train, idx);
    const auto rec = train_step(batch);
    if (on_step) on_step(rec);
    if (tracing && step_ % config_.trace_every == 0) on_trace(record_trace(model_, step_));
    ++done;
  }
}

template <typename T>
EvalMetrics evaluate(ModelAssembly<T>& model, const Dataset& data, Split split,
                     std::size_t chunk) {
  if (chunk == 0) throw ValidationError("evaluation chunk must be >= 1");
  const std::size_t n = split == Split::train ? data.n_train : data.n_val;
  const std::size_t plane = data.plane();

  struct Acc {
    double loss = 0, se = 0, ae = 0;
    std::vector<std::int32_t> pred;
  };
  std::vector<std::vector<Acc>> streams(model.num_tasks);
  std::vector<Acc> ens(model.num_tasks);
  std::vector<std::vector<std::int32_t>> truth(model.num_tasks);
  for (std::size_t t = 0; t < model.num_tasks; ++t)
    streams[t].resize(model.task_streams(t).size());

  for (std::size_t begin = 0; begin < n; begin += chunk) {
    const std::size_t end = std::min(n, begin + chunk);
    std::vector<std::size_t> idx(end - begin);
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
    const auto batch = make_batch<T>(data, split, idx);
    const auto res = forward_all(model, std::span<const Tensor<T>>(batch.inputs), false);
    const double weight = static_cast<double>(idx.size());
    for (const auto& out : res.tasks) {
      const auto t = out.task;
      const auto kind = model.tasks[t].loss;
      const auto& target = batch.targets[t];
      auto accumulate = [&](Acc& acc, const Tensor<T>& pred) {
        acc.loss += weight * static_cast<double>(task_loss(kind, pred, target).item());
        if (kind == TaskLoss::segmentation) {
          const auto p = argmax_channels(pred);
          acc.pred.insert(acc.pred.end(), p.begin(), p.end());
          return;
        }
        const auto pv = pred.values();
        const auto tv = target.values();
        for (std::size_t i = 0; i < pv.size(); ++i) {
          const double d = static_cast<double>(pv[i]) - static_cast<double>(tv[i]);
          acc.se += d * d;
          acc.ae += std::abs(d);
        }
      };
      for (std::size_t k = 0; k < out.predictions.size(); ++k)
        accumulate(streams[t][k], out.predictions[k]);
      accumulate(ens[t], out.ensemble);
      if (kind == TaskLoss::segmentation) {
        const auto gt = labels_of(target);
        truth[t].insert(truth[t].end(), gt.begin(), gt.end());
      }
    }
  }

  EvalMetrics metrics;
  const double pixels = static_cast<double>(n * plane);
  for (std::size_t t = 0; t < model.num_tasks; ++t) {
    TaskMetrics tm;
    tm.task = t;
    tm.segmentation = model.tasks[t].loss == TaskLoss::segmentation;
    const auto classes = model.tasks[t].out_channels;
    auto finish = [&](const Acc& acc, std::size_t stream) {
      StreamMetrics sm;
      sm.stream = stream;
      sm.modality = stream < model.streams.size() ? model.streams[stream].modality : 0;
      sm.loss = acc.loss / static_cast<double>(n);
      if (tm.segmentation) {
        sm.miou = mean_iou(acc.pred, truth[t], classes);
      } else {
        sm.mse = acc.se / pixels;
        sm.mae = acc.ae / pixels;
      }
      return sm;
    };
    const auto ids = model.task_streams(t);
    for (std::size_t k = 0; k < ids.size(); ++k) tm.streams.push_back(finish(streams[t][k], ids[k]));
    tm.ensemble = finish(ens[t], static_cast<std::size_t>(-1));
    tm.ensemble.modality = 0;
    const auto alpha = decision_scores(model, t);
    tm.alpha.assign(alpha.begin(), alpha.end());
    metrics.tasks.push_back(std::move(tm));
  }
  return metrics;
}

template class Trainer<float>;
template class Trainer<double>;
template EvalMetrics evaluate(ModelAssembly<float>&, const Dataset&, Split, std::size_t);
template EvalMetrics evaluate(ModelAssembly<double>&, const Dataset&, Split, std::size_t);
template std::vector<Tensor<float>> task_inputs(const ModelAssembly<float>&,
                                                const std::vector<Tensor<float>>&, std::size_t);
template std::vector<Tensor<double>> task_inputs(const ModelAssembly<double>&,
                                                 const std::vector<Tensor<double>>&, std::size_t);

}  // namespace cen
