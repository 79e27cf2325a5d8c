// SPDX-License-Identifier: Apache-2.0
//
// Batch / instance normalization with trainable per-channel affine, and the
// L1 penalty on designated scaling-factor channels.
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cen/tensor.hpp"

namespace cen {

enum class NormMode { batch, instance };

std::string to_string(NormMode mode);
NormMode parse_norm_mode(const std::string& text);

template <typename T>
struct NormParams {
  Tensor<T> gamma;  // [C], scaling factors
  Tensor<T> beta;   // [C], offsets
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T eps = T(1e-5);
  T momentum = T(0.1);
  NormMode mode = NormMode::batch;

  /// γ=1, β=0, μ=0, σ²=1.
  static NormParams make(std::size_t channels, NormMode mode = NormMode::batch);
  std::size_t channels() const { return gamma.numel(); }
};

/// Key of a private parameter bank: which input modality and which task it
/// serves.
struct BankKey {
  std::size_t modality = 0;
  std::size_t task = 0;
  bool operator==(const BankKey&) const = default;
};

/// All private normalization layers of one (modality, task) stream, in
/// network order.
template <typename T>
struct NormBank {
  BankKey key;
  std::vector<NormParams<T>> layers;
};

/// Normalizes `x` with batch or per-instance statistics (training) or the
/// running statistics (inference), then applies γ·x̂+β. Training mode
/// updates the running statistics in place.
template <typename T>
Tensor<T> norm_forward(const Tensor<T>& x, NormParams<T>& params, bool training);

/// One L1 term: the channels of a γ vector that carry the sparsity penalty.
template <typename T>
struct SparsityTerm {
  Tensor<T> gamma;
  std::vector<std::size_t> channels;
};

/// λ·Σ|γ_c| over every term's channels. Subgradient at 0 is 0.
template <typename T>
Tensor<T> sparsity_penalty(std::span<const SparsityTerm<T>> terms, T lambda);

extern template struct NormParams<float>;
extern template struct NormParams<double>;

}  // namespace cen
