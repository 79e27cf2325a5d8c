// SPDX-License-Identifier: Apache-2.0
#include "cen/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "cen/error.hpp"

namespace cen {

namespace {

template <typename T>
double eval_at(const std::function<Tensor<T>(const Tensor<T>&)>& f, const Shape& shape,
               std::vector<T> values, std::size_t coord) {
  const Tensor<T> y = f(Tensor<T>::from(shape, std::move(values)));
  const double v = static_cast<double>(y.item());
  if (!std::isfinite(v)) {
    throw NumericError("finite_diff_check: non-finite value while probing coordinate " +
                       std::to_string(coord));
  }
  return v;
}

}  // namespace

template <typename T>
GradCheckResult finite_diff_check(const std::function<Tensor<T>(const Tensor<T>&)>& f,
                                  const Tensor<T>& x, double eps) {
  if (!(eps > 0.0)) throw ContractError("finite_diff_check: eps must be positive");
  const Shape shape = x.shape();
  const std::vector<T> base(x.values().begin(), x.values().end());

  Tensor<T> probe = Tensor<T>::parameter(shape, base);
  Tensor<T> y = f(probe);
  std::vector<double> analytic(base.size(), 0.0);
  if (y.requires_grad()) {
    backward(y);
    if (probe.has_grad())
      for (std::size_t i = 0; i < base.size(); ++i) analytic[i] = probe.grad()[i];
  }

  GradCheckResult result;
  for (std::size_t i = 0; i < base.size(); ++i) {
    if (!std::isfinite(analytic[i])) {
      throw NumericError("finite_diff_check: non-finite analytic gradient at coordinate " +
                         std::to_string(i));
    }
    std::vector<T> plus = base, minus = base;
    plus[i] += static_cast<T>(eps);
    minus[i] -= static_cast<T>(eps);
    const double numeric =
        (eval_at(f, shape, std::move(plus), i) - eval_at(f, shape, std::move(minus), i)) /
        (2.0 * eps);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-12});
    const double rel = std::abs(analytic[i] - numeric) / denom;
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_index = i;
    }
  }
  return result;
}

template GradCheckResult finite_diff_check(const std::function<Tensor<float>(const Tensor<float>&)>&,
                                           const Tensor<float>&, double);
template GradCheckResult finite_diff_check(
    const std::function<Tensor<double>(const Tensor<double>&)>&, const Tensor<double>&, double);

}  // namespace cen
