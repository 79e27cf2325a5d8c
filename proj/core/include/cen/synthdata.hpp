// SPDX-License-Identifier: Apache-2.0
//
// Synthetic multimodal dense-prediction data. Every sample starts from a
// smooth latent field z in [0,1]; modalities are lossy views of z that keep
// complementary parts of it (a blurred view keeps levels, an edge view keeps
// boundaries).
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cen/tensor.hpp"

namespace cen {

/// Row-major H×W plane of reals.
struct Field {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;

  double at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
};

struct Bump {
  double cy, cx, width, amplitude;
};

struct LatentParams {
  std::size_t bumps = 6;
  double width_min = 1.5;
  double width_max = 4.0;
  double amplitude_min = 0.2;
  double amplitude_max = 1.0;
};

/// Σ_k a_k·exp(-|p - c_k|² / (2 s_k²)), min-max normalized to [0,1]
/// (a constant sum maps to 0).
Field render_bumps(std::size_t height, std::size_t width, std::span<const Bump> bumps);

/// Bumps with centers uniform over the plane and widths/amplitudes uniform
/// in the configured ranges.
Field gen_latent(std::uint64_t seed, std::size_t height, std::size_t width,
                 const LatentParams& params = {});

/// Mean absolute difference over all horizontally and vertically adjacent
/// pixel pairs.
double mean_neighbor_difference(const Field& field);

enum class ViewKind { coarse, edge, noisy, quantized };

std::string to_string(ViewKind kind);
ViewKind parse_view_kind(const std::string& text);

/// Default noise level of a view kind: 0.05 (coarse, edge), 0.25 (noisy),
/// 0 (quantized).
double default_noise(ViewKind kind);

/// coarse: 5×5 box blur (replicated borders) + noise. edge: Sobel gradient
/// magnitude divided by its maximum + noise. noisy: z + noise. quantized:
/// min(floor(z·classes), classes-1), noise ignored. Noise is N(0, σ²) per
/// pixel in row-major order from `seed`.
Field derive_modality(const Field& z, ViewKind kind, std::uint64_t seed, double noise_sigma,
                      std::size_t classes = 4);

enum class TaskKind {
  fusion_regression,
  fusion_segmentation,
  cycle_triplet,
  multitask_pair,
  mm_mt_quad,
};

std::string to_string(TaskKind kind);
TaskKind parse_task_kind(const std::string& text);

struct TargetSpec {
  bool segmentation = false;
  std::uint32_t classes = 1;  // output channels (regression: 1)
  bool operator==(const TargetSpec&) const = default;
};

struct DataParams {
  std::size_t height = 32;
  std::size_t width = 32;
  LatentParams latent{};
  double coarse_noise = 0.05;
  double edge_noise = 0.05;
  double noisy_noise = 0.25;
  std::size_t classes = 4;
};

/// Samples 0..n_train-1 form the training split, the rest the validation
/// split. Modalities and targets are stored as f32 planes, sample-major.
struct Dataset {
  TaskKind kind = TaskKind::fusion_regression;
  std::uint64_t seed = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t n_train = 0;
  std::size_t n_val = 0;
  std::vector<ViewKind> modality_kinds;
  std::vector<std::vector<float>> modalities;  // [modality][sample·H·W]
  std::vector<TargetSpec> targets_spec;
  std::vector<std::vector<float>> targets;     // [task][sample·H·W]

  std::size_t samples() const { return n_train + n_val; }
  std::size_t plane() const { return height * width; }
  bool operator==(const Dataset&) const = default;
};

Dataset make_dataset(TaskKind kind, std::size_t n_train, std::size_t n_val, std::uint64_t seed,
                     const DataParams& params = {});

void save_dataset(const Dataset& data, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_dataset(const Dataset& data);
Dataset deserialize_dataset(std::span<const std::uint8_t> bytes);

enum class Split { train, val };

/// Tensors for a set of sample indices of one split: one [B,1,H,W] input per
/// modality and one [B,1,H,W] target per task (class indices for
/// segmentation targets).
template <typename T>
struct SampleBatch {
  std::vector<Tensor<T>> inputs;
  std::vector<Tensor<T>> targets;
  std::size_t size() const { return inputs.empty() ? 0 : inputs.front().dim(0); }
};

template <typename T>
SampleBatch<T> make_batch(const Dataset& data, Split split, std::span<const std::size_t> indices);

/// Whole split as one batch.
template <typename T>
SampleBatch<T> full_split(const Dataset& data, Split split);

}  // namespace cen
