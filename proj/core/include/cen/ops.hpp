// SPDX-License-Identifier: Apache-2.0
//
// Differentiable operations on Tensor<T>. All feature maps are NCHW.
//
// Broadcasting is deliberately narrow: the second operand of add/mul may be
// a scalar (one element) or a per-channel vector of length C applied over a
// rank-4 first operand. Anything else must match shapes exactly.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cen/tensor.hpp"

namespace cen {

struct Conv2dArgs {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

/// Cross-correlation. input [N,Cin,H,W], weight [Cout,Cin,kh,kw], bias [Cout]
/// (bias may be undefined).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 Conv2dArgs args);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T>
Tensor<T> relu(const Tensor<T>& a);

/// Per-channel affine y = s[c]·x + t[c] over [N,C,H,W]. s and t have shape [C].
template <typename T>
Tensor<T> scale_shift(const Tensor<T>& x, const Tensor<T>& s, const Tensor<T>& t);

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a);
template <typename T>
Tensor<T> mean_all(const Tensor<T>& a);

template <typename T>
Tensor<T> upsample_nearest(const Tensor<T>& a, std::size_t factor);

/// Stacks feature maps along the channel axis.
template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts);

/// Softmax of a 1-D tensor.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

/// Element i of a tensor as a one-element tensor.
template <typename T>
Tensor<T> pick(const Tensor<T>& a, std::size_t i);

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target);

/// Per-pixel softmax followed by the mean negative log-likelihood.
/// logits [N,C,H,W]; labels hold N·H·W class indices in [0, C).
template <typename T>
Tensor<T> cross_entropy_pixelwise(const Tensor<T>& logits, std::span<const std::int32_t> labels);

/// Class index of the largest logit at each pixel.
template <typename T>
std::vector<std::int32_t> argmax_channels(const Tensor<T>& logits);

}  // namespace cen
