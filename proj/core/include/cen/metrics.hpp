// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace cen {

double mse(std::span<const double> pred, std::span<const double> target);
double mae(std::span<const double> pred, std::span<const double> target);

/// Mean over classes of |pred ∩ gt| / |pred ∪ gt|; classes absent from both
/// maps are skipped. Returns 0 when every class is skipped.
double mean_iou(std::span<const std::int32_t> pred, std::span<const std::int32_t> target,
                std::size_t classes);

}  // namespace cen
