// SPDX-License-Identifier: Apache-2.0
//
// Encoder-decoder assemblies for the four fusion / multitask topologies.
//
// A stream is one (input modality, output task) path through an encoder and
// a decoder. Streams reference convolution storage (possibly shared with
// other streams) and a normalization bank (private per (modality, task)
// unless norms are shared). At every exchange-enabled normalized layer the
// streams of one group are fused: streams of the same task in the encoder,
// streams of the same modality in the decoder.
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cen/exchange.hpp"
#include "cen/normalization.hpp"
#include "cen/tensor.hpp"

namespace cen {

enum class Topology { multimodal, cycle, multitask, mm_mt };
enum class ExchangeSide { automatic, none, encoder, decoder, both };
enum class Fusion { exchange, none, concat, average };
enum class TaskLoss { regression, segmentation };

std::string to_string(Topology t);
std::string to_string(ExchangeSide s);
std::string to_string(Fusion f);
Topology parse_topology(const std::string& text);
ExchangeSide parse_exchange_side(const std::string& text);
Fusion parse_fusion(const std::string& text);

struct EncoderStage {
  std::size_t out_channels;
  std::size_t kernel;
  std::size_t stride;
};

struct DecoderStage {
  std::size_t out_channels;
  std::size_t kernel;
  std::size_t upsample;
};

struct NetSpec {
  std::size_t in_channels = 1;
  std::vector<EncoderStage> encoder{{8, 3, 2}, {16, 3, 2}, {32, 3, 2}};
  std::vector<DecoderStage> decoder{{16, 3, 2}, {8, 3, 2}};
  std::size_t head_kernel = 3;
  std::size_t head_upsample = 2;
  NormMode norm_mode = NormMode::batch;
  ExchangeSide exchange_on = ExchangeSide::automatic;
};

struct TaskSpec {
  TaskLoss loss = TaskLoss::regression;
  std::size_t out_channels = 1;
};

struct AssemblyOptions {
  bool share_convs = true;
  bool share_norms = false;
  Fusion fusion = Fusion::exchange;
  ExchangeVariant variant{};
  Partition partition = Partition::divided;
  ThresholdRule rule = ThresholdRule::magnitude;
  double theta = 2e-2;
  /// Cycle topology: one decoder for all tasks (true) or one per task.
  bool cycle_shared_decoder = true;
  std::uint64_t init_seed = 0;
};

template <typename T>
struct ConvLayer {
  Tensor<T> weight;  // [Cout, Cin, k, k]
  Tensor<T> bias;    // [Cout]
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Convolution storage referenced by one or more streams. A shared layer
/// has exactly one cell; gradients from every stream accumulate into it.
template <typename T>
struct ConvSet {
  std::string name;
  std::vector<ConvLayer<T>> layers;
};

/// Where a stream finds a normalization layer: a private bank or the shared
/// bank.
struct NormRef {
  bool shared = false;
  std::size_t bank = 0;
};

struct StreamRoute {
  std::size_t modality = 0;
  std::size_t task = 0;
  std::size_t encoder_convs = 0;
  std::size_t decoder_convs = 0;
  NormRef encoder_norms;
  NormRef decoder_norms;
  std::size_t encoder_norm_offset = 0;  // index of encoder layer 0 in its bank
  std::size_t decoder_norm_offset = 0;  // index of decoder layer 0 in its bank
  std::optional<std::size_t> fusion_convs;  // concat fusion only
};

enum class ParamRole { conv_weight, conv_bias, norm_gamma, norm_beta, fusion_weight, fusion_bias, score_logit };
enum class ParamSide { encoder, decoder, scores };

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
  ParamRole role;
  ParamSide side;
};

template <typename T>
struct NamedNorm {
  std::string name;
  NormParams<T>* params;
};

template <typename T>
struct ModelAssembly {
  Topology topology = Topology::multimodal;
  std::size_t num_modalities = 1;  // distinct input modalities
  std::size_t num_inputs = 1;      // M1: input streams per task
  std::size_t num_tasks = 1;       // M2 (cycle: M1 + 1)
  NetSpec spec;
  AssemblyOptions options;
  std::vector<TaskSpec> tasks;

  std::vector<ConvSet<T>> encoder_convs;
  std::vector<ConvSet<T>> decoder_convs;  // decoder stages followed by the head
  std::vector<ConvSet<T>> fusion_convs;   // 1×1 convs of the concat baseline
  std::vector<NormBank<T>> banks;         // private, keyed (modality, task)
  std::optional<NormBank<T>> shared_bank; // norms shared by several streams
  std::vector<StreamRoute> streams;
  std::vector<Tensor<T>> score_logits;    // per task, one logit per stream

  bool encoder_exchange = false;
  bool decoder_exchange = false;
  std::uint64_t forward_counter = 0;

  std::size_t encoder_layers() const { return spec.encoder.size(); }
  std::size_t decoder_layers() const { return spec.decoder.size(); }
  /// Streams of one task, in input order.
  std::vector<std::size_t> task_streams(std::size_t task) const;
  NormBank<T>& bank(const NormRef& ref);
  const NormBank<T>& bank(const NormRef& ref) const;

  /// Every trainable tensor exactly once, with a stable name.
  std::vector<NamedParam<T>> parameters() const;
  /// Every normalization layer exactly once (for running statistics).
  std::vector<NamedNorm<T>> norm_layers();
};

template <typename T>
ModelAssembly<T> build_model(const NetSpec& spec, Topology topology, std::size_t m1,
                             std::size_t m2, std::vector<TaskSpec> tasks,
                             const AssemblyOptions& options = {});

/// Softmax simplex weights α for one task.
template <typename T>
std::vector<T> decision_scores(const ModelAssembly<T>& model, std::size_t task);

/// Exchange decisions taken at one site during a forward pass.
struct SiteRecord {
  bool decoder = false;
  std::size_t layer = 0;
  std::size_t group = 0;                  // task (encoder) or modality (decoder)
  std::vector<std::size_t> streams;       // stream indices in mask order
  ExchangeMask mask;
};

template <typename T>
struct TaskOutput {
  std::size_t task = 0;
  std::vector<std::size_t> streams;       // stream indices
  std::vector<Tensor<T>> predictions;     // per stream
  Tensor<T> ensemble;                     // Σ α_m · ŷ_m
};

template <typename T>
struct ForwardResult {
  std::vector<TaskOutput<T>> tasks;
  std::vector<SiteRecord> sites;
};

/// Runs every task. `modality_inputs` holds one [N,Cin,H,W] tensor per input
/// modality of the model (cycle: all M1+1 modalities).
template <typename T>
ForwardResult<T> forward_all(ModelAssembly<T>& model, std::span<const Tensor<T>> modality_inputs,
                             bool training);

/// Runs the streams of one task. `task_inputs` are the inputs of that task's
/// streams in order. Topologies whose tasks are coupled through decoder
/// exchange (multitask, mm_mt) evaluate all tasks and return the requested one.
template <typename T>
TaskOutput<T> forward(ModelAssembly<T>& model, std::span<const Tensor<T>> task_inputs,
                      std::size_t task, bool training);

/// Σ_m α_m · ŷ_m with α = softmax(logits). Predictions are used as given.
template <typename T>
Tensor<T> ensemble(std::span<const Tensor<T>> predictions, const Tensor<T>& logits);

/// Loss of one task on a prediction (MSE or pixel cross-entropy). Targets of
/// segmentation tasks are class indices stored as values.
template <typename T>
Tensor<T> task_loss(TaskLoss kind, const Tensor<T>& prediction, const Tensor<T>& target);

/// One gradient step on the decision-score logits of every task in
/// `outputs`, through the task loss of the ensemble with predictions
/// detached. Subnetwork parameters are not touched.
template <typename T>
void update_decision_scores(ModelAssembly<T>& model, std::span<const TaskOutput<T>> outputs,
                            std::span<const Tensor<T>> targets, T learning_rate);

struct ParameterCounts {
  std::size_t encoder_convs = 0;
  std::size_t decoder_convs = 0;
  std::size_t fusion = 0;
  std::size_t norms = 0;
  std::size_t scores = 0;
  std::size_t total() const { return encoder_convs + decoder_convs + fusion + norms + scores; }
};

template <typename T>
ParameterCounts count_parameters(const ModelAssembly<T>& model);

/// Private (modality, task) banks.
template <typename T>
std::size_t count_norm_sets(const ModelAssembly<T>& model);

/// L1 terms of every stream at every exchange site: the stream's region
/// channels of the γ vector used there. Empty unless fusion is exchange.
template <typename T>
std::vector<SparsityTerm<T>> sparsity_terms(const ModelAssembly<T>& model);

/// Scaling factors observed at one exchange site, one row per stream of the
/// group, with each stream's region.
template <typename T>
struct SiteGammas {
  bool decoder = false;
  std::size_t layer = 0;
  std::size_t group = 0;
  std::vector<std::size_t> streams;
  std::vector<std::vector<T>> gammas;
  std::vector<std::vector<std::size_t>> regions;
};

/// Every exchange site of the model with current γ values (for tracing).
template <typename T>
std::vector<SiteGammas<T>> exchange_sites(const ModelAssembly<T>& model);

/// Order-sensitive checksum of every subnetwork parameter (scores excluded).
template <typename T>
std::uint64_t subnetwork_checksum(const ModelAssembly<T>& model);

}  // namespace cen
