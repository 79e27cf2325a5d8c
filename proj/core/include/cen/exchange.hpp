// SPDX-License-Identifier: Apache-2.0
//
// Channel exchanging between M parallel streams.
//
// Each stream owns a disjoint sub-part (region) of the channels of every
// exchange-enabled layer. Within its own region a stream's channel is
// replaced by the mean of the other streams' channel whenever the stream's
// scaling factor for that channel is at most the threshold. Channels outside
// the region are never replaced for that stream. The replaced channel is cut
// from the stream's own graph, so its gradient flows only to the donors.
#pragma once

#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "cen/normalization.hpp"
#include "cen/tensor.hpp"

namespace cen {

enum class Partition {
  divided,    // stream m owns channels [m·C/M, (m+1)·C/M)
  undivided,  // every stream may exchange (and is sparsified) on all channels
};

enum class ThresholdRule {
  magnitude,  // replace iff |γ| <= θ
  signed_,    // replace iff γ <= θ (the literal keep-condition γ > θ)
};

struct ExchangePlan {
  std::size_t num_streams = 2;
  double theta = 2e-2;
  Partition partition = Partition::divided;
  ThresholdRule rule = ThresholdRule::magnitude;
  std::set<std::size_t> enabled_layers;

  /// Channels owned by `stream` in a layer with `channels` channels.
  std::vector<std::size_t> region(std::size_t stream, std::size_t channels) const;
  /// Throws ConfigError if the plan cannot partition `channels`.
  void validate(std::size_t channels) const;
  bool enabled(std::size_t layer) const { return enabled_layers.count(layer) != 0; }
};

ExchangePlan make_plan(std::size_t num_streams, double theta, std::set<std::size_t> layers,
                       Partition partition = Partition::divided);

/// Per (stream, channel) replacement flags for one layer.
struct ExchangeMask {
  std::size_t num_streams = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> replaced;  // row-major [stream][channel]
  std::size_t eligible = 0;            // Σ region sizes

  static ExchangeMask empty(std::size_t num_streams, std::size_t channels);
  bool is_replaced(std::size_t stream, std::size_t channel) const {
    return replaced[stream * channels + channel] != 0;
  }
  void set(std::size_t stream, std::size_t channel, bool value = true) {
    replaced[stream * channels + channel] = value ? 1 : 0;
  }
  std::size_t count() const;
  std::size_t count(std::size_t stream) const;
  /// Replaced channels over eligible channels.
  double exchanged_fraction() const;
};

template <typename T>
ExchangeMask compute_exchange_mask(std::span<const std::span<const T>> gammas,
                                   const ExchangePlan& plan);

/// Applies a mask to post-normalization feature maps x'_m. Replaced channel
/// (m, c) becomes the mean over m' != m of x'_{m',c}.
template <typename T>
std::vector<Tensor<T>> channel_exchange(std::span<const Tensor<T>> normalized,
                                        const ExchangeMask& mask);

/// Same selection as channel_exchange but replaced channels are set to zero
/// (no gradient reaches the stream's own channel).
template <typename T>
std::vector<Tensor<T>> zero_out(std::span<const Tensor<T>> normalized, const ExchangeMask& mask);

enum class VariantKind { threshold, fixed_fraction, random_fraction, zero_out, no_divide };

std::string to_string(VariantKind kind);
VariantKind parse_variant_kind(const std::string& text);

struct ExchangeVariant {
  VariantKind kind = VariantKind::threshold;
  double fraction = 0.3;    // fixed_fraction / random_fraction
  std::uint64_t seed = 0;   // random_fraction
};

/// Mask selected by a variant. fixed_fraction takes the round(p·|region|)
/// smallest |γ| of each region; random_fraction a uniform subset of that
/// size drawn from `seed`; zero_out and no_divide use the threshold rule
/// (no_divide over an undivided partition).
template <typename T>
ExchangeMask variant_mask(std::span<const std::span<const T>> gammas, const ExchangePlan& plan,
                          const ExchangeVariant& variant);

template <typename T>
std::vector<Tensor<T>> exchange_variant(std::span<const Tensor<T>> normalized,
                                        std::span<const std::span<const T>> gammas,
                                        const ExchangePlan& plan, const ExchangeVariant& variant);

/// Sparsity over banks: bank i is stream i of `plan`; every enabled layer's
/// region channels of that stream carry the penalty.
template <typename T>
Tensor<T> sparsity_penalty(std::span<const NormBank<T>> banks, const ExchangePlan& plan, T lambda);

}  // namespace cen
