// SPDX-License-Identifier: Apache-2.0
//
// Stochastic gradient descent with heavy-ball momentum:
//   g ← ∇w + wd·w,  b ← μ·b + g (b ← g on a slot's first step),  w ← w − lr·b
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cen/tensor.hpp"

namespace cen {

template <typename T>
struct SgdSlot {
  std::string name;
  Tensor<T> param;
  T lr = T(0);
  T weight_decay = T(0);
  std::vector<T> buffer;  // momentum; empty until the first step
};

template <typename T>
class Sgd {
 public:
  explicit Sgd(T momentum = T(0.9)) : momentum_(momentum) {}

  void add(std::string name, Tensor<T> param, T lr, T weight_decay);

  /// One update of every slot whose parameter holds a gradient; the
  /// learning rate of each slot is scaled by `lr_scale`.
  void step(T lr_scale = T(1));
  void zero_grad();

  std::vector<SgdSlot<T>>& slots() { return slots_; }
  const std::vector<SgdSlot<T>>& slots() const { return slots_; }
  T momentum() const { return momentum_; }

 private:
  T momentum_;
  std::vector<SgdSlot<T>> slots_;
};

extern template class Sgd<float>;
extern template class Sgd<double>;

}  // namespace cen
