// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "cen/ops.hpp"
#include "cen/random.hpp"
#include "cen/tensor.hpp"

namespace testing {

inline std::vector<double> randn(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  cen::CounterRng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = scale * rng.normal();
  return v;
}

template <typename T = double>
cen::Tensor<T> random_tensor(cen::Shape shape, std::uint64_t seed, double scale = 1.0) {
  const auto v = randn(cen::shape_numel(shape), seed, scale);
  return cen::Tensor<T>::from(shape, std::vector<T>(v.begin(), v.end()));
}

template <typename T = double>
cen::Tensor<T> random_param(cen::Shape shape, std::uint64_t seed, double scale = 1.0) {
  const auto v = randn(cen::shape_numel(shape), seed, scale);
  return cen::Tensor<T>::parameter(shape, std::vector<T>(v.begin(), v.end()));
}

// Weighted sum with fixed pseudo-random weights: a scalar whose gradient
// exercises every output element differently.
template <typename T>
cen::Tensor<T> probe_sum(const cen::Tensor<T>& y, std::uint64_t seed = 99) {
  const auto w = random_tensor<T>(y.shape(), seed);
  return cen::sum_all(cen::mul(y, w));
}

}  // namespace testing
