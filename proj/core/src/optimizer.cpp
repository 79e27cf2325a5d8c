// SPDX-License-Identifier: Apache-2.0
#include "cen/optimizer.hpp"

#include "cen/error.hpp"

namespace cen {

template <typename T>
void Sgd<T>::add(std::string name, Tensor<T> param, T lr, T weight_decay) {
  if (lr < T(0) || weight_decay < T(0))
    throw ConfigError("learning rate and weight decay of '" + name + "' must be >= 0");
  if (!param.requires_grad()) throw ContractError("'" + name + "' is not a trainable leaf");
  slots_.push_back({std::move(name), std::move(param), lr, weight_decay, {}});
}

template <typename T>
void Sgd<T>::step(T lr_scale) {
  for (auto& s : slots_) {
    if (!s.param.has_grad()) continue;
    auto w = s.param.mutable_values();
    const auto g = s.param.grad();
    const T lr = s.lr * lr_scale;
    const bool first = s.buffer.empty();
    if (first) s.buffer.resize(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      const T d = g[i] + s.weight_decay * w[i];
      s.buffer[i] = first ? d : momentum_ * s.buffer[i] + d;
      w[i] -= lr * s.buffer[i];
    }
  }
}

template <typename T>
void Sgd<T>::zero_grad() {
  for (auto& s : slots_) s.param.clear_grad();
}

template class Sgd<float>;
template class Sgd<double>;

}  // namespace cen
