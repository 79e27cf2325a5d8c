// SPDX-License-Identifier: Apache-2.0
#include "cen/ridge.hpp"

#include <Eigen/Dense>
#include <algorithm>

#include "cen/error.hpp"

namespace cen {

RidgeFit fit_pixel_ridge(const Dataset& data, const std::vector<std::size_t>& modalities,
                         std::size_t task, double ridge) {
  if (modalities.empty()) throw ValidationError("ridge needs at least one modality");
  for (auto m : modalities)
    if (m >= data.modalities.size())
      throw ValidationError("ridge modality " + std::to_string(m) + " out of range");
  if (task >= data.targets.size()) throw ValidationError("ridge task out of range");
  if (ridge < 0) throw ConfigError("ridge strength must be >= 0");

  const std::size_t k = modalities.size() + 1, plane = data.plane();
  auto feature_row = [&](std::size_t pixel, Eigen::VectorXd& row) {
    for (std::size_t j = 0; j < modalities.size(); ++j)
      row[static_cast<Eigen::Index>(j)] = data.modalities[modalities[j]][pixel];
    row[static_cast<Eigen::Index>(k - 1)] = 1.0;
  };

  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(k, k);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k);
  Eigen::VectorXd row(k);
  const auto& target = data.targets[task];
  for (std::size_t p = 0; p < data.n_train * plane; ++p) {
    feature_row(p, row);
    gram.noalias() += row * row.transpose();
    rhs += row * static_cast<double>(target[p]);
  }
  gram.diagonal().array() += ridge;
  const Eigen::VectorXd w = gram.ldlt().solve(rhs);

  double sse = 0;
  const std::size_t begin = data.n_train * plane, end = data.samples() * plane;
  for (std::size_t p = begin; p < end; ++p) {
    feature_row(p, row);
    const double e = row.dot(w) - target[p];
    sse += e * e;
  }
  RidgeFit fit;
  fit.weights.assign(w.data(), w.data() + w.size());
  fit.val_mse = sse / static_cast<double>(end - begin);
  return fit;
}

Certificate complementarity_certificate(const Dataset& data, double ridge, double required) {
  Certificate c;
  c.required = required;
  std::vector<std::size_t> all;
  for (std::size_t m = 0; m < data.modalities.size(); ++m) {
    c.single_mse.push_back(fit_pixel_ridge(data, {m}, 0, ridge).val_mse);
    all.push_back(m);
  }
  c.joint_mse = fit_pixel_ridge(data, all, 0, ridge).val_mse;
  c.ratio = *std::min_element(c.single_mse.begin(), c.single_mse.end()) / c.joint_mse;
  return c;
}

}  // namespace cen
