// SPDX-License-Identifier: Apache-2.0
#include "cen/metrics.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "cen/error.hpp"

namespace cen {

namespace {

void check_pair(std::size_t a, std::size_t b) {
  if (a != b)
    throw DimensionError("metric inputs differ in length: " + std::to_string(a) + " vs " +
                         std::to_string(b));
  if (a == 0) throw ValidationError("metric inputs are empty");
}

}  // namespace

double mse(std::span<const double> pred, std::span<const double> target) {
  check_pair(pred.size(), target.size());
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

double mae(std::span<const double> pred, std::span<const double> target) {
  check_pair(pred.size(), target.size());
  double s = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - target[i]);
  return s / static_cast<double>(pred.size());
}

double mean_iou(std::span<const std::int32_t> pred, std::span<const std::int32_t> target,
                std::size_t classes) {
  check_pair(pred.size(), target.size());
  std::vector<std::size_t> inter(classes, 0), uni(classes, 0);
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto p = pred[i], t = target[i];
    if (p < 0 || t < 0 || static_cast<std::size_t>(p) >= classes ||
        static_cast<std::size_t>(t) >= classes)
      throw ValidationError("label at position " + std::to_string(i) + " outside [0, " +
                            std::to_string(classes) + ")");
    if (p == t) {
      ++inter[static_cast<std::size_t>(p)];
      ++uni[static_cast<std::size_t>(p)];
    } else {
      ++uni[static_cast<std::size_t>(p)];
      ++uni[static_cast<std::size_t>(t)];
    }
  }
  double total = 0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    if (uni[c] == 0) continue;
    total += static_cast<double>(inter[c]) / static_cast<double>(uni[c]);
    ++counted;
  }
  return counted ? total / static_cast<double>(counted) : 0.0;
}

}  // namespace cen
