// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

#include "cen/tensor.hpp"

namespace cen {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
};

/// Compares the autodiff gradient of a scalar function against central
/// differences, coordinate by coordinate. `f` receives a fresh parameter
/// tensor holding the probe point and must be pure. The relative error of a
/// coordinate is |a − n| / max(|a|, |n|, 1e-12).
///
/// Throws NumericError naming the coordinate if any evaluation is non-finite.
template <typename T>
GradCheckResult finite_diff_check(const std::function<Tensor<T>(const Tensor<T>&)>& f,
                                  const Tensor<T>& x, double eps = 1e-5);

}  // namespace cen
