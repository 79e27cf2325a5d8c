// SPDX-License-Identifier: Apache-2.0
//
// Pixel-wise linear ridge regression used to certify that a fusion dataset
// rewards combining modalities before any network is trained.
#pragma once

#include <cstddef>
#include <vector>

#include "cen/synthdata.hpp"

namespace cen {

struct RidgeFit {
  std::vector<double> weights;  // one per feature, bias last
  double val_mse = 0;
};

/// Fits target ≈ Σ_k w_k·x_k + b per pixel over the training split, using the
/// listed modalities as features, and reports the validation MSE.
RidgeFit fit_pixel_ridge(const Dataset& data, const std::vector<std::size_t>& modalities,
                         std::size_t task = 0, double ridge = 1e-3);

struct Certificate {
  std::vector<double> single_mse;  // one per modality
  double joint_mse = 0;
  double ratio = 0;                // min(single_mse) / joint_mse
  double required = 1.5;
  bool holds() const { return ratio >= required; }
};

/// Single-modality ridges against the ridge on all modalities together.
Certificate complementarity_certificate(const Dataset& data, double ridge = 1e-3,
                                        double required = 1.5);

}  // namespace cen
